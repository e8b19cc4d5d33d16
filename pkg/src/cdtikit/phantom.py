"""Synthetic cardiac-like DTI phantoms and SMS interslice-leakage corruption.

A phantom heart is a stack of short-axis slices: an annular myocardium mask
whose per-voxel diffusion tensor has its primary eigenvector following a
transmural helix (the helix angle ramps linearly from +60 deg at the
endocardium to -60 deg at the epicardium by default) with eigenvalues
(1.2, 0.6, 0.4) x 1e-3 mm^2/s. Magnitude signals follow the tensor model;
each slice carries a smooth random second-order polynomial phase field, so
the complex data has genuine phase structure.

Leakage corruption is additive complex mixing between the slices of one
simultaneously excited group:

    corrupted_i = clean_i + sum_{j != i} alpha_ij * clean_j + noise

with alpha either scalar or a smooth low-frequency spatial map, plus
independent complex Gaussian noise (std sigma per real component). The
slice-separation algorithms themselves are out of scope; alpha is the knob
that stands in for their residual error.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dti import DiffusionProtocol, TensorField, compute_local_basis


class GeometryError(ValueError):
    pass


class LeakageError(ValueError):
    pass


def default_protocol(b_value=1000.0, n_directions=12, seed=7):
    """b0 plus a deterministic spread of unit directions on the hemisphere."""
    golden = (1 + 5**0.5) / 2
    idx = np.arange(n_directions)
    # Fibonacci hemisphere: generic, no collinear pairs
    z = (idx + 0.5) / n_directions * 0.8 + 0.15
    phi = 2 * np.pi * idx / golden
    xy = np.sqrt(1 - z**2)
    dirs = np.stack([xy * np.cos(phi), xy * np.sin(phi), z], axis=1)
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    bvals = np.concatenate([[0.0], np.full(n_directions, b_value)])
    bvecs = np.vstack([[0.0, 0.0, 0.0], dirs])
    return DiffusionProtocol(bvals, bvecs)


@dataclass
class PhantomGeometry:
    image_size: int = 32
    n_slices: int = 10
    inner_radius: tuple = (0.17, 0.21)  # fractions of image size
    outer_radius: tuple = (0.36, 0.42)
    center_jitter: float = 0.03
    ha_endo: float = 60.0
    ha_epi: float = -60.0
    e2a_amplitude: float = 20.0
    eigenvalues: tuple = (1.2e-3, 0.6e-3, 0.4e-3)
    s0_ripple: float = 0.05
    phase_scale: float = 1.2  # radians, coefficients of the polynomial field

    def validate(self):
        if self.inner_radius[0] >= self.outer_radius[0]:
            raise GeometryError("annulus inner radius must be below outer radius")
        if self.image_size < 16 or self.n_slices < 2:
            raise GeometryError("phantom needs image_size >= 16 and n_slices >= 2")
        if self.n_slices % 2:
            raise GeometryError("n_slices must be even to form SMS slice pairs")


@dataclass
class Phantom:
    masks: np.ndarray  # [S, H, W] bool
    tensors: np.ndarray  # [S, H, W, 6]
    dwi: np.ndarray  # [K, S, H, W] complex
    s0: np.ndarray  # [S, H, W]
    protocol: DiffusionProtocol
    geometry: PhantomGeometry


def _polynomial_phase(rng, size, scale):
    xs = np.linspace(-1.0, 1.0, size)
    x, y = np.meshgrid(xs, xs, indexing="xy")
    c = rng.uniform(-scale, scale, size=6)
    return c[0] + c[1] * x + c[2] * y + c[3] * x * x + c[4] * x * y + c[5] * y * y


def generate_phantom(seed, geometry=None, protocol=None):
    """Deterministic phantom heart from a seed (or a numpy SeedSequence)."""
    geometry = geometry or PhantomGeometry()
    geometry.validate()
    protocol = protocol or default_protocol()
    rng = np.random.default_rng(seed)
    n = geometry.image_size
    s = geometry.n_slices
    lam = np.asarray(geometry.eigenvalues)

    cx = n / 2 + rng.uniform(-1, 1) * geometry.center_jitter * n
    cy = n / 2 + rng.uniform(-1, 1) * geometry.center_jitter * n
    r_in0 = rng.uniform(*geometry.inner_radius) * n
    r_out0 = rng.uniform(*geometry.outer_radius) * n
    taper = rng.uniform(0.85, 1.0)  # apex-to-base radius variation

    cols, rows = np.meshgrid(np.arange(n), np.arange(n))
    masks = np.zeros((s, n, n), dtype=bool)
    tensors = np.zeros((s, n, n, 6))
    s0 = np.zeros((s, n, n))

    radius = np.hypot(cols - cx, rows - cy)
    for si in range(s):
        shrink = taper + (1.0 - taper) * si / max(s - 1, 1)
        r_in, r_out = r_in0 * shrink, r_out0 * shrink
        masks[si] = (radius >= r_in) & (radius <= r_out)

    basis = compute_local_basis(masks)
    masks &= basis.valid

    for si in range(s):
        shrink = taper + (1.0 - taper) * si / max(s - 1, 1)
        r_in, r_out = r_in0 * shrink, r_out0 * shrink
        m = masks[si]
        t = np.clip((radius - r_in) / max(r_out - r_in, 1e-9), 0.0, 1.0)
        ha = np.radians(geometry.ha_endo + (geometry.ha_epi - geometry.ha_endo) * t)
        e2a = np.radians(geometry.e2a_amplitude * (2.0 * t - 1.0))
        e1 = (
            np.cos(ha)[..., None] * basis.circumferential[si]
            + np.sin(ha)[..., None] * basis.longitudinal[si]
        )
        cross = np.cross(e1, basis.radial[si])
        e2 = np.cos(e2a)[..., None] * basis.radial[si] + np.sin(e2a)[..., None] * cross
        e3 = np.cross(e1, e2)
        mat = (
            lam[0] * e1[..., :, None] * e1[..., None, :]
            + lam[1] * e2[..., :, None] * e2[..., None, :]
            + lam[2] * e3[..., :, None] * e3[..., None, :]
        )
        tensors[si][m] = TensorField.from_matrices(mat).components[m]
        s0[si][m] = 1.0 + geometry.s0_ripple * np.cos(np.pi * t[m])

    magnitudes = protocol.simulate(tensors, s0=s0)  # [K, S, H, W]
    magnitudes *= masks[None]
    phases = np.stack(
        [_polynomial_phase(rng, n, geometry.phase_scale) for _ in range(s)]
    )
    dwi = magnitudes * np.exp(1j * phases)[None]
    return Phantom(masks, tensors, dwi, s0, protocol, geometry)


def slice_groups(n_slices, sms_factor=2):
    """Pair slices far apart in the stack (large distance factor)."""
    per_group = n_slices // sms_factor
    if per_group * sms_factor != n_slices:
        raise GeometryError("n_slices must be divisible by the SMS factor")
    return [tuple(g + k * per_group for k in range(sms_factor)) for g in range(per_group)]


# ---- leakage ---------------------------------------------------------------------------


@dataclass
class SmsPair:
    corrupted: np.ndarray  # [..., sms, H, W] complex
    clean: np.ndarray
    meta: dict = field(default_factory=dict)


def smooth_alpha_field(rng, size, alpha_range):
    """Low-frequency random field rescaled into [alpha_range]."""
    xs = np.linspace(0.0, 1.0, size)
    x, y = np.meshgrid(xs, xs, indexing="xy")
    f = np.zeros((size, size))
    for _ in range(3):
        kx, ky = rng.uniform(-1.5, 1.5, 2)
        f += rng.uniform(0.3, 1.0) * np.cos(2 * np.pi * (kx * x + ky * y) + rng.uniform(0, 2 * np.pi))
    f -= f.min()
    peak = f.max()
    if peak > 0:
        f /= peak
    lo, hi = alpha_range
    return lo + (hi - lo) * f


def apply_sms_leakage(clean, alpha, noise_sigma, rng):
    """Mix the slices of one excitation group in the complex domain.

    clean: [sms, H, W] or [K, sms, H, W] complex. alpha: scalar, [sms, sms]
    matrix, or [sms, sms, H, W] map; entry (i, j) scales the leakage of
    slice j into slice i (the diagonal is ignored). Complex Gaussian noise
    with per-component std `noise_sigma` is added on top.
    """
    clean = np.asarray(clean, dtype=np.complex128)
    stacked = clean.ndim == 4
    group = clean if stacked else clean[None]
    k, sms = group.shape[:2]
    spatial = group.shape[2:]

    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.ndim == 0:
        alpha = np.full((sms, sms), float(alpha))
    if alpha.shape[:2] != (sms, sms):
        raise LeakageError(f"alpha must be scalar or start with shape ({sms}, {sms})")
    if np.max(np.abs(alpha)) >= 1.0:
        raise LeakageError("leakage coefficient magnitude must be < 1")

    corrupted = group.copy()
    for i in range(sms):
        for j in range(sms):
            if i == j:
                continue
            corrupted[:, i] += alpha[i, j] * group[:, j]
    if noise_sigma > 0:
        noise = rng.normal(0.0, noise_sigma, size=(2,) + group.shape)
        corrupted += noise[0] + 1j * noise[1]
    if not stacked:
        corrupted = corrupted[0]
    return SmsPair(
        corrupted=corrupted,
        clean=clean,
        meta={"noise_sigma": float(noise_sigma), "alpha_max": float(np.max(np.abs(alpha)))},
    )
