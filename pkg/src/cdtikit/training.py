"""Training recipe, evaluation protocol and the 12-way comparison driver.

The recipe defaults match the experimental setup being reproduced: Adam at
lr 3e-4 dropped by 10x after epoch 100, batch size 16, 200 epochs, residual
learning with an L1 loss on magnitudes, per-sample normalisation of the
magnitude range to [0, 1] by the corrupted group's peak, and random k*90
rotation plus horizontal/vertical flips as augmentation (right-angle
rotations avoid interpolating complex data). The test-set evaluation is run
with the checkpoint from the epoch with the lowest validation MAE.

Every number a run reports is a deterministic function of (seed, config,
dataset); wall-clock timings are recorded alongside but are not part of the
deterministic surface.
"""

from __future__ import annotations

import csv
import json
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .dataset import DatasetManifest
from .dti import compute_local_basis, compute_maps, fit_tensors
from .metrics import MetricError, mae, maae, psnr, ssim
from .nn import functional as F
from .nn import unet
from .nn.unet import ConfigError, ModelConfig
from .report import MetricReport, markdown_table, pairwise_csv, per_slice_csv
from .tensor import Tensor


class NumericalError(RuntimeError):
    """Loss or gradients left the representable range; the run is aborted."""


@dataclass
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    epochs: int = 200
    lr: float = 3e-4
    lr_drop_epoch: int = 100
    lr_drop_factor: float = 10.0
    batch_size: int = 16
    loss: str = "l1"  # l1 | l2, on magnitudes
    include_phase_in_loss: bool = False
    augment: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.loss not in ("l1", "l2"):
            raise ConfigError(f"loss must be l1 or l2, got {self.loss!r}")
        if self.epochs < 1 or self.batch_size < 1 or self.lr <= 0:
            raise ConfigError("epochs and batch_size must be >= 1 and lr > 0")

    def lr_for_epoch(self, epoch):
        """Learning rate for a 1-based epoch index."""
        return self.lr / self.lr_drop_factor if epoch > self.lr_drop_epoch else self.lr


@dataclass
class RunRecord:
    run: str
    epochs: list = field(default_factory=list)  # per-epoch dicts
    best_epoch: int = 0
    best_val_mae: float = float("inf")
    checkpoint: str = ""
    aborted: bool = False

    def seconds_per_epoch(self):
        times = [e["seconds"] for e in self.epochs]
        return float(np.mean(times)) if times else float("nan")


class Adam:
    """Standard Adam with bias correction over real parameter tensors."""

    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, lr):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 / (1 - b1**self.t)
        c2 = 1.0 / (1 - b2**self.t)
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            if not np.all(np.isfinite(g)):
                raise NumericalError(f"non-finite gradient in parameter {i}")
            m, v = self.m[i], self.v[i]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * (g * g)
            denom = np.sqrt(v * c2)
            denom += self.eps
            p.data = p.data - (lr * c1) * m / denom


# ---- sample pipeline --------------------------------------------------------------


def apply_orientation(arr, quarter_turns, flip_h, flip_v):
    """k*90 deg in-plane rotation plus optional flips on the last two axes."""
    out = np.rot90(arr, quarter_turns, axes=(-2, -1))
    if flip_h:
        out = out[..., ::-1]
    if flip_v:
        out = out[..., ::-1, :]
    return np.ascontiguousarray(out)


def augment_pair(corrupted, clean, rng):
    """One shared random orientation for the corrupted/clean pair."""
    k = int(rng.integers(4))
    fh = bool(rng.integers(2))
    fv = bool(rng.integers(2))
    return (
        apply_orientation(corrupted, k, fh, fv),
        apply_orientation(clean, k, fh, fv),
    )


def normalize_pair(corrupted, clean):
    """Scale magnitudes into [0, 1] by the corrupted group's peak magnitude.

    Phase is untouched (complex division by a positive real). Returns
    (corrupted, clean, scale); None for an all-zero sample (skip signal).
    """
    scale = float(np.max(np.abs(corrupted)))
    if scale == 0.0:
        return None
    return corrupted / scale, clean / scale, scale


def encode_slices(slices, config: ModelConfig):
    """Complex [n, H, W] slice stack -> model input array for `config`."""
    slices = np.asarray(slices, dtype=np.complex128)
    n = slices.shape[0]
    if config.dim == "2d":
        if config.data_mode == "mag":
            return np.abs(slices)
        if config.data_mode == "comp":
            return slices
        out = np.empty((2 * n,) + slices.shape[1:], dtype=np.float64)
        out[0::2] = np.abs(slices)
        out[1::2] = np.angle(slices)
        return out
    # 3d: [channels, slice axis, H, W]
    if config.data_mode == "mag":
        return np.abs(slices)[None]
    if config.data_mode == "comp":
        return slices[None]
    return np.stack([np.abs(slices), np.angle(slices)])


def decode_magnitudes(encoded, config: ModelConfig):
    """Model output array -> corrected magnitude stack [n, H, W]."""
    if config.dim == "2d":
        if config.data_mode == "mag":
            return np.asarray(encoded, dtype=np.float64)
        if config.data_mode == "comp":
            return np.abs(encoded)
        return np.asarray(encoded[0::2], dtype=np.float64)
    if config.data_mode == "mag":
        return np.asarray(encoded[0], dtype=np.float64)
    if config.data_mode == "comp":
        return np.abs(encoded[0])
    return np.asarray(encoded[0], dtype=np.float64)


def _magnitude_channels(pred, config: ModelConfig):
    if config.data_mode != "magphs":
        return pred
    if config.dim == "2d":
        return pred[:, 0::2]
    return pred[:, 0:1]


def _phase_channels(pred, config: ModelConfig):
    if config.dim == "2d":
        return pred[:, 1::2]
    return pred[:, 1:2]


def training_loss(pred, target, config: TrainConfig):
    """Magnitude loss per data mode; optional naive phase-channel term."""
    mode = config.model.data_mode
    if mode == "comp":
        return F.magnitude_loss(pred, target, config.loss)
    if mode == "mag":
        diff = T.sub(pred, target)
        return T.tmean(T.magnitude(diff) if config.loss == "l1" else T.square(diff))
    m_diff = T.sub(_magnitude_channels(pred, config.model),
                   _magnitude_channels(target, config.model))
    loss = T.tmean(T.magnitude(m_diff) if config.loss == "l1" else T.square(m_diff))
    if config.include_phase_in_loss:
        p_diff = T.sub(_phase_channels(pred, config.model),
                       _phase_channels(target, config.model))
        phase = T.tmean(T.magnitude(p_diff) if config.loss == "l1" else T.square(p_diff))
        loss = T.add(loss, phase)
    return loss


class GroupCache:
    """Loads dataset groups once and serves per-sample slice stacks."""

    def __init__(self, manifest: DatasetManifest):
        self.manifest = manifest
        self._cache = {}
        self._records = {rec["id"]: rec for rec in manifest.groups()}

    def data(self, gid):
        if gid not in self._cache:
            self._cache[gid] = self.manifest.load_group(self._records[gid])
        return self._cache[gid]

    def record(self, gid):
        return self._records[gid]


def sample_index(manifest: DatasetManifest, config: ModelConfig, split):
    """Flat list of (group id, acquisition, slice-or-None) training samples."""
    k = len(manifest.manifest["protocol"]["bvals"])
    single = config.slice_mode == "single"
    items = []
    for rec in manifest.groups(split):
        for ki in range(k):
            if single:
                items.extend((rec["id"], ki, s) for s in range(manifest.sms_factor))
            else:
                items.append((rec["id"], ki, None))
    return items


def fetch_sample(cache: GroupCache, item):
    gid, ki, s = item
    data = cache.data(gid)
    if s is None:
        return data["corrupted"][ki], data["clean"][ki]
    return data["corrupted"][ki, s : s + 1], data["clean"][ki, s : s + 1]


def _forward_batch(net, arrays):
    return net(Tensor(np.stack(arrays)))


def _validation_mae(net, cache, items, config: ModelConfig, batch_size):
    """Mean magnitude MAE over a split, in the normalised sample space."""
    total, count = 0.0, 0
    net.eval()
    with T.no_grad():
        for start in range(0, len(items), batch_size):
            chunk = items[start : start + batch_size]
            xs, targets = [], []
            for item in chunk:
                corrupted, clean = fetch_sample(cache, item)
                norm = normalize_pair(corrupted, clean)
                if norm is None:
                    continue
                corrupted, clean, _ = norm
                xs.append(encode_slices(corrupted, config))
                targets.append(np.abs(clean))
            if not xs:
                continue
            pred = _forward_batch(net, xs)
            for bi, target in enumerate(targets):
                got = decode_magnitudes(pred.data[bi], config)
                total += float(np.mean(np.abs(got - target)))
                count += 1
    return total / max(count, 1)


def identity_validation_mae(manifest, config: ModelConfig, split="val"):
    """The do-nothing baseline: corrupted vs clean in normalised space."""
    cache = GroupCache(manifest)
    total, count = 0.0, 0
    for item in sample_index(manifest, config, split):
        corrupted, clean = fetch_sample(cache, item)
        norm = normalize_pair(corrupted, clean)
        if norm is None:
            continue
        corrupted, clean, _ = norm
        total += float(np.mean(np.abs(np.abs(corrupted) - np.abs(clean))))
        count += 1
    return total / max(count, 1)


def train(config: TrainConfig, manifest: DatasetManifest, run_dir) -> RunRecord:
    """Full training loop; returns the per-epoch record and best checkpoint."""
    if config.model.sms_factor != manifest.sms_factor:
        raise ConfigError(
            f"model sms_factor {config.model.sms_factor} != dataset {manifest.sms_factor}"
        )
    run_dir = Path(run_dir)
    (run_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
    net_seed, loop_seed = np.random.SeedSequence(config.seed).spawn(2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        net = unet.build(config.model, seed=net_seed)
    rng = np.random.default_rng(loop_seed)
    adam = Adam(net.parameters())
    cache = GroupCache(manifest)
    train_items = sample_index(manifest, config.model, "train")
    val_items = sample_index(manifest, config.model, "val")
    if not train_items or not val_items:
        raise ConfigError("dataset is missing train or val groups")

    record = RunRecord(run=config.model.name)
    best_dir = run_dir / "checkpoints" / "best"
    with open(run_dir / "config.txt", "w") as fh:
        for key, value in asdict(config).items():
            fh.write(f"{key} = {json.dumps(value)}\n")

    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        lr = config.lr_for_epoch(epoch)
        net.train(True)
        order = rng.permutation(len(train_items))
        loss_sum, seen = 0.0, 0
        aborted = False
        try:
            for start in range(0, len(order), config.batch_size):
                chunk = [train_items[i] for i in order[start : start + config.batch_size]]
                xs, ys = [], []
                for item in chunk:
                    corrupted, clean = fetch_sample(cache, item)
                    if config.augment:
                        corrupted, clean = augment_pair(corrupted, clean, rng)
                    norm = normalize_pair(corrupted, clean)
                    if norm is None:
                        continue
                    corrupted, clean, _ = norm
                    xs.append(encode_slices(corrupted, config.model))
                    ys.append(encode_slices(clean, config.model))
                if not xs:
                    continue
                pred = _forward_batch(net, xs)
                loss = training_loss(pred, Tensor(np.stack(ys)), config)
                value = loss.item()
                if not np.isfinite(value):
                    raise NumericalError(f"non-finite loss at epoch {epoch}")
                net.zero_grad()
                loss.backward()
                adam.step(lr)
                loss_sum += value * len(xs)
                seen += len(xs)
        except NumericalError as exc:
            record.aborted = True
            record.epochs.append(
                {"epoch": epoch, "train_loss": float("nan"), "val_mae": float("nan"),
                 "lr": lr, "seconds": time.perf_counter() - t0, "error": str(exc)}
            )
            if not best_dir.exists():  # keep something loadable for diagnosis
                unet.save_checkpoint(net, best_dir, epoch=epoch, val_mae=float("inf"))
            aborted = True

        if aborted:
            break
        val_mae = _validation_mae(net, cache, val_items, config.model, config.batch_size)
        seconds = time.perf_counter() - t0
        record.epochs.append(
            {"epoch": epoch, "train_loss": loss_sum / max(seen, 1),
             "val_mae": val_mae, "lr": lr, "seconds": seconds}
        )
        if val_mae < record.best_val_mae:
            record.best_val_mae = val_mae
            record.best_epoch = epoch
            unet.save_checkpoint(net, best_dir, epoch=epoch, val_mae=val_mae)

    record.checkpoint = str(best_dir)
    with open(run_dir / "log.csv", "w", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["epoch", "train_loss", "val_mae", "lr", "seconds", "error"]
        )
        writer.writeheader()
        for row in record.epochs:
            writer.writerow(row)
    lines = [f"# {config.model.name}", ""]
    if record.aborted:
        lines.append("**Run aborted on a numerical failure** (see log.csv).")
    else:
        lines.append(
            f"Best epoch {record.best_epoch} of {config.epochs} "
            f"(validation MAE {record.best_val_mae:.6f}); "
            f"{record.seconds_per_epoch():.2f}s/epoch."
        )
    lines.append("")
    lines.append("| epoch | train loss | val MAE | lr |")
    lines.append("|---|---|---|---|")
    for row in record.epochs:
        lines.append(
            f"| {row['epoch']} | {row['train_loss']:.6f} | {row['val_mae']:.6f} "
            f"| {row['lr']:.1e} |"
        )
    (run_dir / "report.md").write_text("\n".join(lines) + "\n")
    return record


# ---- evaluation ------------------------------------------------------------------


def _corrected_stack(net, data, config: ModelConfig, batch_size=16):
    """Run inference over a group's full protocol; de-normalised magnitudes."""
    corrupted = data["corrupted"]
    k, sms = corrupted.shape[:2]
    out = np.zeros((k, sms) + corrupted.shape[2:], dtype=np.float64)
    single = config.slice_mode == "single"
    items = [(ki, s) for ki in range(k) for s in (range(sms) if single else [None])]
    with T.no_grad():
        for start in range(0, len(items), batch_size):
            chunk = items[start : start + batch_size]
            xs, metas = [], []
            for ki, s in chunk:
                sample = corrupted[ki] if s is None else corrupted[ki, s : s + 1]
                norm = normalize_pair(sample, sample)
                if norm is None:
                    metas.append(None)
                    continue
                sample_n, _, scale = norm
                xs.append(encode_slices(sample_n, config))
                metas.append((ki, s, scale))
            if not xs:
                continue
            pred = _forward_batch(net, xs)
            bi = 0
            for meta in metas:
                if meta is None:
                    continue
                ki, s, scale = meta
                mags = decode_magnitudes(pred.data[bi], config) * scale
                if s is None:
                    out[ki] = mags
                else:
                    out[ki, s] = mags[0]
                bi += 1
    return out


def _map_set(stack, protocol, mask):
    field_ = fit_tensors(stack, protocol)
    basis = compute_local_basis(mask)
    return compute_maps(field_, basis), field_


def _slice_metrics(report, gid, corrected, data, protocol):
    clean_mag = np.abs(data["clean"])
    k, sms = clean_mag.shape[:2]
    for ki in range(k):
        for s in range(sms):
            sid = f"{gid}/k{ki:02d}/s{s}"
            report.add("mae", sid, mae(corrected[ki, s], clean_mag[ki, s]))
            report.add("psnr", sid, psnr(corrected[ki, s], clean_mag[ki, s]))
            report.add("ssim", sid, ssim(corrected[ki, s], clean_mag[ki, s]))
    if "mask" not in data:
        warnings.warn(f"{gid}: no myocardium mask stored; map metrics skipped")
        return
    for s in range(sms):
        mask = data["mask"][s]
        if not mask.any():
            warnings.warn(f"{gid}/s{s}: empty mask; map metrics skipped")
            continue
        try:
            got, _ = _map_set(corrected[:, s], protocol, mask)
            want, _ = _map_set(clean_mag[:, s], protocol, mask)
            shared = mask & got.valid & want.valid
            if not shared.any():
                raise MetricError("no valid voxels")
            sid = f"{gid}/s{s}"
            report.add("ha_maae", sid, maae(got.ha, want.ha, shared))
            report.add("e2a_maae", sid, maae(got.e2a, want.e2a, shared))
            report.add("md_mae", sid, mae(got.md, want.md, shared))
            report.add("fa_mae", sid, mae(got.fa, want.fa, shared))
        except MetricError as exc:
            warnings.warn(f"{gid}/s{s}: map metrics skipped ({exc})")


def evaluate(source, manifest: DatasetManifest, split="test", run_name=None) -> MetricReport:
    """Metric report for a checkpoint/network on one dataset split."""
    if isinstance(source, (str, Path)):
        net, ck_manifest = unet.load_checkpoint(source)
        config = net.config
        run_name = run_name or config.name
    else:
        net = source
        config = net.config
        run_name = run_name or config.name
    net.eval()
    protocol = manifest.protocol()
    cache = GroupCache(manifest)
    report = MetricReport(run=run_name)
    for rec in manifest.groups(split):
        data = cache.data(rec["id"])
        corrected = _corrected_stack(net, data, config)
        _slice_metrics(report, rec["id"], corrected, data, protocol)
    return report


def evaluate_identity(manifest: DatasetManifest, split="test") -> MetricReport:
    """Baseline report: the uncorrected input scored as if it were the output."""
    protocol = manifest.protocol()
    cache = GroupCache(manifest)
    report = MetricReport(run="Identity")
    report.meta["exclude_from_ranking"] = True
    for rec in manifest.groups(split):
        data = cache.data(rec["id"])
        _slice_metrics(report, rec["id"], np.abs(data["corrupted"]), data, protocol)
    return report


# ---- the 12-way comparison ---------------------------------------------------------


def compare_all(manifest: DatasetManifest, out_dir, epochs=5, seed=0,
                base_config: TrainConfig = None, configs=None):
    """Train and evaluate every grid variant; write the comparison report.

    Individual run failures are recorded and do not stop the sweep.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    configs = configs or unet.all_configs(sms_factor=manifest.sms_factor)
    reports, records, failures = [], {}, {}
    for config in configs:
        kwargs = asdict(base_config) if base_config else {}
        kwargs.pop("model", None)
        kwargs.update({"epochs": epochs, "seed": seed})
        name = config.name
        try:
            tc = TrainConfig(model=config, **kwargs)
            rec = train(tc, manifest, out_dir / "runs" / name)
            if rec.aborted:
                raise NumericalError("training aborted on non-finite values")
            rep = evaluate(rec.checkpoint, manifest)
            rep.meta["seconds_per_epoch"] = rec.seconds_per_epoch()
            rep.meta["parameters"] = unet.count_parameters(
                unet.load_checkpoint(rec.checkpoint)[0]
            )
            rep.meta["best_epoch"] = rec.best_epoch
            reports.append(rep)
            records[name] = rec
        except Exception as exc:  # isolate failures, keep sweeping
            failures[name] = f"{type(exc).__name__}: {exc}"

    identity = evaluate_identity(manifest)
    table_reports = reports + [identity]

    lines = ["# Model comparison", ""]
    lines.append(markdown_table(table_reports))
    lines.append("")
    lines.append("| Run | Parameters | Best epoch | s/epoch | vs 2D-All-Mag |")
    lines.append("|---|---|---|---|---|")
    ref_time = next(
        (r.meta["seconds_per_epoch"] for r in reports if r.run == "2D-All-Mag"),
        float("nan"),
    )
    for rep in reports:
        spe = rep.meta["seconds_per_epoch"]
        ratio = spe / ref_time if ref_time and np.isfinite(ref_time) else float("nan")
        lines.append(
            f"| {rep.run} | {rep.meta['parameters']:,} | {rep.meta['best_epoch']} "
            f"| {spe:.2f} | {ratio:.2f}x |"
        )
    if failures:
        lines.append("")
        lines.append("## Failed runs")
        for name, msg in sorted(failures.items()):
            lines.append(f"- {name}: {msg}")
    (out_dir / "comparison.md").write_text("\n".join(lines) + "\n")
    (out_dir / "comparison.csv").write_text(per_slice_csv(table_reports))
    (out_dir / "pairwise_wilcoxon.csv").write_text(pairwise_csv(reports))
    return {
        "reports": reports,
        "identity": identity,
        "records": records,
        "failures": failures,
        "out_dir": str(out_dir),
    }
