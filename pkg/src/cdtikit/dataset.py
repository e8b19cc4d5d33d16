"""Dataset generation and persistence.

A dataset directory holds one file set per SMS slice group:

    groups/h{heart}_g{group}_{corrupted,clean,mask,tensors,alpha}.cdt
    manifest.json

`corrupted`/`clean` are [K, sms, H, W] complex stacks over the full
diffusion protocol, `mask` the [sms, H, W] myocardium masks, `tensors` the
[sms, H, W, 6] ground-truth tensor components and `alpha` the [sms, sms,
H, W] leakage maps actually applied. Whole hearts are assigned to a single
split so no heart straddles train/val/test. Regeneration from the same seed
and parameters is byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dti import DiffusionProtocol
from .phantom import (
    PhantomGeometry,
    apply_sms_leakage,
    default_protocol,
    generate_phantom,
    slice_groups,
    smooth_alpha_field,
)
from .tensorio import read_tensor, write_tensor

SPLITS = ("train", "val", "test")


class SplitError(ValueError):
    pass


@dataclass
class DatasetParams:
    n_hearts: int = 8
    geometry: PhantomGeometry = field(default_factory=PhantomGeometry)
    b_value: float = 1000.0
    n_directions: int = 12
    alpha_range: tuple = (0.05, 0.35)
    spatial_alpha: bool = True
    noise_sigma: float = 0.02
    sms_factor: int = 2
    split_fractions: tuple = (0.75, 0.125, 0.125)
    distance_factor_percent: float = 400.0  # metadata only; alpha encodes strength
    seed: int = 0

    def protocol(self):
        return default_protocol(self.b_value, self.n_directions)


def _split_counts(n_hearts, fractions):
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise SplitError("split fractions must sum to 1")
    active = sum(1 for f in fractions if f > 0)
    if n_hearts < active:
        raise SplitError(f"{n_hearts} hearts cannot fill {active} splits")
    counts = [int(round(f * n_hearts)) if f > 0 else 0 for f in fractions]
    for i, f in enumerate(fractions):
        if f > 0 and counts[i] == 0:
            counts[i] = 1
    while sum(counts) > n_hearts:
        counts[int(np.argmax(counts))] -= 1
    while sum(counts) < n_hearts:
        counts[int(np.argmax([f for f in fractions]))] += 1
    return counts


def build_dataset(out_dir, params: DatasetParams = None) -> "DatasetManifest":
    """Generate, corrupt and persist a full synthetic dataset."""
    params = params or DatasetParams()
    out_dir = Path(out_dir)
    (out_dir / "groups").mkdir(parents=True, exist_ok=True)
    protocol = params.protocol()

    counts = _split_counts(params.n_hearts, params.split_fractions)
    heart_split = []
    for split, count in zip(SPLITS, counts):
        heart_split += [split] * count

    root_seq = np.random.SeedSequence(params.seed)
    heart_seqs = root_seq.spawn(params.n_hearts)

    group_records = []
    size = params.geometry.image_size
    for h in range(params.n_hearts):
        phantom_seq, corrupt_seq = heart_seqs[h].spawn(2)
        phantom = generate_phantom(phantom_seq, params.geometry, protocol)
        corrupt_rng = np.random.default_rng(corrupt_seq)
        for g, slices in enumerate(slice_groups(params.geometry.n_slices, params.sms_factor)):
            clean = phantom.dwi[:, list(slices)]  # [K, sms, H, W]
            sms = len(slices)
            alpha = np.zeros((sms, sms, size, size))
            for i in range(sms):
                for j in range(sms):
                    if i == j:
                        continue
                    if params.spatial_alpha:
                        alpha[i, j] = smooth_alpha_field(corrupt_rng, size, params.alpha_range)
                    else:
                        alpha[i, j] = corrupt_rng.uniform(*params.alpha_range)
            pair = apply_sms_leakage(clean, alpha, params.noise_sigma, corrupt_rng)
            gid = f"h{h:02d}_g{g:02d}"
            files = {}
            payload = {
                "corrupted": pair.corrupted,
                "clean": pair.clean,
                "mask": phantom.masks[list(slices)].astype(np.float64),
                "tensors": phantom.tensors[list(slices)],
                "alpha": alpha,
            }
            for kind, arr in payload.items():
                rel = f"groups/{gid}_{kind}.cdt"
                write_tensor(out_dir / rel, arr)
                files[kind] = rel
            group_records.append(
                {
                    "id": gid,
                    "heart": h,
                    "group": g,
                    "split": heart_split[h],
                    "slices": list(slices),
                    "files": files,
                }
            )

    manifest = {
        "format": "cdtikit-dataset-v1",
        "seed": params.seed,
        "params": asdict(params),
        "protocol": {
            "bvals": protocol.bvals.tolist(),
            "bvecs": protocol.bvecs.tolist(),
        },
        "groups": group_records,
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    return DatasetManifest.load(out_dir)  # canonical JSON types (tuples -> lists)


class DatasetManifest:
    """Loaded view of a dataset directory."""

    def __init__(self, root, manifest):
        self.root = Path(root)
        self.manifest = manifest

    @classmethod
    def load(cls, root):
        root = Path(root)
        with open(root / "manifest.json") as fh:
            return cls(root, json.load(fh))

    @property
    def seed(self):
        return self.manifest["seed"]

    @property
    def sms_factor(self):
        return self.manifest["params"]["sms_factor"]

    def protocol(self) -> DiffusionProtocol:
        p = self.manifest["protocol"]
        return DiffusionProtocol(np.asarray(p["bvals"]), np.asarray(p["bvecs"]))

    def groups(self, split=None):
        if split is None:
            return list(self.manifest["groups"])
        if split not in SPLITS:
            raise SplitError(f"unknown split {split!r}")
        return [g for g in self.manifest["groups"] if g["split"] == split]

    def hearts(self, split):
        return sorted({g["heart"] for g in self.groups(split)})

    def load_group(self, record):
        out = {}
        for kind, rel in record["files"].items():
            arr = read_tensor(self.root / rel)
            if kind == "mask":
                arr = arr.astype(bool)
            out[kind] = arr
        return out
