"""U-Net variant builder: 2D/3D x magnitude/magnitude+phase/complex x all/single.

One configuration record describes a cell of the 12-way grid. All variants
share one encoder/decoder skeleton so that only three things vary: operator
dimensionality, real vs complex arithmetic, and the input/output channel
layout. Channel counts default to values that keep every canonical variant
within +/-10% of a 3,000,000 real-parameter budget (a complex weight counts
as two parameters).

Block plan (depth 5): encoder levels carry [2, 2, 2, 1, 1] conv blocks with
channel doubling per level; decoder levels carry [2, 2, 1, 1] (shallow to
deep). Wide levels get a single block so the budget is spent evenly rather
than concentrated in the bottleneck. Downsampling is window-2 max pooling
(largest magnitude for complex data, in-plane only for 3D so the slice axis
is never collapsed); upsampling is a kernel-2 transpose convolution that
halves the channel count (stride 1 plus trailing trim on the 3D slice axis).
The final 1x1 convolution is zero-initialised and its output is added to the
input: a freshly built network is exactly the identity map.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .. import tensor as T
from ..tensor import ShapeError, Tensor
from ..tensorio import read_tensor, write_tensor
from . import layers as L

DIMS = ("2d", "3d")
DATA_MODES = ("mag", "magphs", "comp")
SLICE_MODES = ("all", "single")

# canonical base channel counts per (dim, data_mode)
BASE_CHANNELS = {
    ("2d", "mag"): 28,
    ("2d", "magphs"): 28,
    ("3d", "mag"): 16,
    ("3d", "magphs"): 16,
    ("2d", "comp"): 20,
    ("3d", "comp"): 11,
}


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    dim: str = "2d"
    data_mode: str = "mag"
    slice_mode: str = "all"
    base_channels: int = 0  # 0 -> canonical default for (dim, data_mode)
    depth: int = 5
    sms_factor: int = 2
    dropout: float = 0.0

    def __post_init__(self):
        self.dim = self.dim.lower()
        self.data_mode = self.data_mode.lower()
        self.slice_mode = self.slice_mode.lower()
        if self.dim not in DIMS:
            raise ConfigError(f"dim must be one of {DIMS}, got {self.dim!r}")
        if self.data_mode not in DATA_MODES:
            raise ConfigError(f"data_mode must be one of {DATA_MODES}")
        if self.slice_mode not in SLICE_MODES:
            raise ConfigError(f"slice_mode must be one of {SLICE_MODES}")
        if not self.base_channels:
            self.base_channels = BASE_CHANNELS[(self.dim, self.data_mode)]
        if self.base_channels < 1:
            raise ConfigError("base_channels must be >= 1")
        if self.depth < 2:
            raise ConfigError("depth must be >= 2")
        if self.sms_factor < 2:
            raise ConfigError("sms_factor must be >= 2")

    @property
    def is_complex(self):
        return self.data_mode == "comp"

    @property
    def name(self):
        dim = self.dim.upper()
        slc = "All" if self.slice_mode == "all" else "Single"
        data = {"mag": "Mag", "magphs": "MagPhs", "comp": "Comp"}[self.data_mode]
        return f"{dim}-{slc}-{data}"

    def io_channels(self):
        """Model input (== output) channel count for this variant."""
        per_slice = {"mag": 1, "magphs": 2, "comp": 1}[self.data_mode]
        if self.dim == "2d":
            n_slices = self.sms_factor if self.slice_mode == "all" else 1
            return per_slice * n_slices
        return per_slice  # 3d: slices live on the leading spatial axis

    def slice_axis_extent(self):
        """Extent of the 3D slice axis (1 for 2D or Single mode)."""
        if self.dim == "3d" and self.slice_mode == "all":
            return self.sms_factor
        return 1

    def spatial_ndim(self):
        return 2 if self.dim == "2d" else 3


def _level_channels(config):
    return [config.base_channels * 2**k for k in range(config.depth)]


def _enc_blocks(level):
    return 2 if level <= 2 else 1


def _dec_blocks(level):
    return 2 if level <= 1 else 1


class ConvBlock(L.Module):
    def __init__(self, in_ch, out_ch, nd, complex_data, rng, dropout, drop_seed):
        super().__init__()
        kernel = (3,) * nd
        self.conv = L.Conv(in_ch, out_ch, kernel, rng,
                           padding=tuple((k - 1) // 2 for k in kernel),
                           complex_weights=complex_data)
        self.norm = L.BatchNorm(out_ch, complex_data=complex_data)
        self.act = L.ModReLU(out_ch) if complex_data else L.ReLU()
        self.drop = L.Dropout(dropout, seed=drop_seed) if dropout > 0 else None

    def forward(self, x):
        h = self.act(self.norm(self.conv(x)))
        if self.drop is not None:
            h = self.drop(h)
        return h


class UNet(L.Module):
    """Residual encoder/decoder network for one grid configuration."""

    def __init__(self, config: ModelConfig, seed=0):
        super().__init__()
        self.config = config
        rng = np.random.default_rng(seed)
        nd = config.spatial_ndim()
        cx = config.is_complex
        chans = _level_channels(config)
        io_ch = config.io_channels()
        if config.dim == "3d" and config.slice_axis_extent() < 2:
            warnings.warn(
                "3D model with a single slice plane: the slice axis is "
                "degenerate (extent 1); the network is still buildable",
                stacklevel=2,
            )
        if config.dim == "3d":
            self.pool_window = (1, 2, 2)
            up_kernel, up_stride, up_trim = (2, 2, 2), (1, 2, 2), (1, 0, 0)
        else:
            self.pool_window = (2, 2)
            up_kernel, up_stride, up_trim = (2, 2), (2, 2), (0, 0)

        drop_seed = int(rng.integers(2**31))
        enc = []
        for lvl, ch in enumerate(chans):
            in_ch = io_ch if lvl == 0 else chans[lvl - 1]
            blocks = []
            for b in range(_enc_blocks(lvl)):
                blocks.append(ConvBlock(in_ch if b == 0 else ch, ch, nd, cx, rng,
                                        config.dropout, drop_seed + lvl * 31 + b))
            enc.append(L.ModuleList(blocks))
        self.encoder = L.ModuleList(enc)
        self.pool = L.MaxPool(self.pool_window)

        ups, dec = [], []
        for lvl in range(config.depth - 2, -1, -1):
            ups.append(L.ConvTranspose(chans[lvl + 1], chans[lvl], up_kernel, rng,
                                       stride=up_stride, output_trim=up_trim,
                                       complex_weights=cx))
            blocks = [ConvBlock(2 * chans[lvl], chans[lvl], nd, cx, rng,
                                config.dropout, drop_seed + 1000 + lvl * 31)]
            for b in range(1, _dec_blocks(lvl)):
                blocks.append(ConvBlock(chans[lvl], chans[lvl], nd, cx, rng,
                                        config.dropout, drop_seed + 1000 + lvl * 31 + b))
            dec.append(L.ModuleList(blocks))
        self.upsamplers = L.ModuleList(ups)
        self.decoder = L.ModuleList(dec)
        self.head = L.Conv(chans[0], io_ch, (1,) * nd, rng,
                           complex_weights=cx, zero_init=True)

    # ---- shape management ----------------------------------------------------

    def _pad_input(self, x):
        """Pad the in-plane axes to a multiple of 2**(depth-1), symmetric."""
        m = 2 ** (self.config.depth - 1)
        spatial = x.shape[2:]
        pads = [(0, 0), (0, 0)]
        if self.config.dim == "3d":
            pads.append((0, 0))  # slice axis is never pooled
        for s in spatial[-2:]:
            total = (-s) % m
            pads.append((total // 2, total - total // 2))
        if all(p == (0, 0) for p in pads):
            return x, None
        return T.pad(x, tuple(pads)), pads

    def _check_input(self, x):
        cfg = self.config
        want_nd = cfg.spatial_ndim() + 2
        if x.ndim != want_nd:
            raise ShapeError(
                f"{cfg.name} expects rank-{want_nd} input [batch, channel, ...], "
                f"got shape {x.shape}"
            )
        if x.shape[1] != cfg.io_channels():
            raise ShapeError(
                f"{cfg.name} expects {cfg.io_channels()} channels, got {x.shape[1]}"
            )
        if cfg.is_complex != x.is_complex:
            kind = "complex" if cfg.is_complex else "real"
            raise ShapeError(f"{cfg.name} expects {kind} input")

    def forward(self, x):
        self._check_input(x)
        h, pads = self._pad_input(x)
        skips = []
        for lvl, blocks in enumerate(self.encoder):
            for block in blocks:
                h = block(h)
            if lvl < self.config.depth - 1:
                skips.append(h)
                h = self.pool(h)
        for up, blocks, skip in zip(self.upsamplers, self.decoder, reversed(skips)):
            h = up(h)
            h = T.concat([skip, h], axis=1)
            for block in blocks:
                h = block(h)
        correction = self.head(h)
        if pads is not None:
            sl = tuple(
                slice(b, correction.shape[i] - a) for i, (b, a) in enumerate(pads)
            )
            correction = correction[sl]
        return T.add(x, correction)


def build(config: ModelConfig, seed=0) -> UNet:
    return UNet(config, seed=seed)


def count_parameters(module) -> int:
    """Number of learnable real scalars (a complex weight counts as 2)."""
    return int(sum(p.data.size for p in module.parameters()))


def all_configs(sms_factor=2, depth=5, dropout=0.0):
    """The 12 grid cells in a stable report order."""
    out = []
    for dim in DIMS:
        for slice_mode in SLICE_MODES:
            for data_mode in DATA_MODES:
                out.append(ModelConfig(dim=dim, data_mode=data_mode,
                                       slice_mode=slice_mode,
                                       sms_factor=sms_factor, depth=depth,
                                       dropout=dropout))
    return out


# ---- checkpoints ------------------------------------------------------------------


def save_checkpoint(net: UNet, directory, epoch=None, val_mae=None, extra=None):
    directory = Path(directory)
    (directory / "params").mkdir(parents=True, exist_ok=True)
    (directory / "buffers").mkdir(parents=True, exist_ok=True)
    names = []
    for name, p in net.named_parameters():
        write_tensor(directory / "params" / f"{name}.cdt", p.data)
        names.append(name)
    buffer_names = []
    for name, b in net.named_buffers():
        write_tensor(directory / "buffers" / f"{name}.cdt", b)
        buffer_names.append(name)
    manifest = {
        "config": asdict(net.config),
        "epoch": epoch,
        "val_mae": val_mae,
        "params": names,
        "buffers": buffer_names,
    }
    if extra:
        manifest.update(extra)
    with open(directory / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    return directory


def load_checkpoint(directory):
    directory = Path(directory)
    with open(directory / "manifest.json") as fh:
        manifest = json.load(fh)
    config = ModelConfig(**manifest["config"])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        net = build(config, seed=0)
    own = dict(net.named_parameters())
    if set(own) != set(manifest["params"]):
        raise ConfigError("checkpoint parameter names do not match the architecture")
    for name in manifest["params"]:
        arr = read_tensor(directory / "params" / f"{name}.cdt")
        if arr.shape != own[name].data.shape:
            raise ConfigError(f"checkpoint shape mismatch for {name}")
        own[name].data = arr
    for name in manifest.get("buffers", []):
        net.set_buffer(name, read_tensor(directory / "buffers" / f"{name}.cdt"))
    return net, manifest
