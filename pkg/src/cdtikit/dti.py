"""Diffusion tensor fitting and the four derived cardiac maps.

The signal model per voxel is S_k = S0 * exp(-b_k g_k^T D g_k) with a
symmetric 3x3 tensor D. Fitting is log-linear least squares over the seven
unknowns (ln S0 and the six unique tensor components); it is exact on
noiseless data, which the synthetic round-trip tests exploit.

Maps:

* MD = trace(D) / 3
* FA = sqrt(3/2) * ||lambda - mean|| / ||lambda||, eigenvalues clamped at 0,
  clipped to [0, 1]
* HA = signed angle between the circumferential direction and the projection
  of the primary eigenvector onto the circumferential-longitudinal plane,
  positive when tilting toward +longitudinal, wrapped to [-90, 90)
* E2A = angle of the secondary eigenvector against the cross-myocyte
  direction (the radial direction orthogonalised against e1), measured in
  the plane orthogonal to e1, wrapped to [-90, 90)

Voxel coordinates map to a right-handed frame: x = column index,
y = row index, z = slice axis; the default long axis is +z.

Eigen-decomposition is a vectorised cyclic Jacobi iteration specialised to
symmetric 3x3 matrices (no external solver; cross-checked against
numpy.linalg.eigh in the tests).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

B_ZERO_THRESHOLD = 1.0  # s/mm^2: acquisitions below this count as b ~ 0

# unique-component order used throughout: xx, yy, zz, xy, xz, yz
_COMPONENT_PAIRS = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))


class ProtocolError(ValueError):
    pass


class FitError(RuntimeError):
    pass


@dataclass
class DiffusionProtocol:
    """Acquisition description: b-value (s/mm^2) and unit gradient per volume."""

    bvals: np.ndarray
    bvecs: np.ndarray  # [K, 3], unit rows (free for b ~ 0 acquisitions)

    def __post_init__(self):
        self.bvals = np.asarray(self.bvals, dtype=np.float64)
        self.bvecs = np.asarray(self.bvecs, dtype=np.float64)
        if self.bvals.ndim != 1 or self.bvecs.shape != (self.bvals.size, 3):
            raise ProtocolError("need bvals [K] and bvecs [K, 3]")
        weighted = self.bvals >= B_ZERO_THRESHOLD
        if not np.any(~weighted):
            raise ProtocolError("at least one b ~ 0 acquisition is required")
        if np.count_nonzero(weighted) < 6:
            raise ProtocolError("at least 6 diffusion-weighted directions required")
        norms = np.linalg.norm(self.bvecs[weighted], axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ProtocolError("weighted gradient directions must have unit norm")
        if np.linalg.matrix_rank(self.design_matrix()) < 7:
            raise ProtocolError("directions are collinear: design matrix is rank-deficient")

    def design_matrix(self):
        """Rows [1, -b gx^2, -b gy^2, -b gz^2, -2b gx gy, -2b gx gz, -2b gy gz]."""
        b = self.bvals
        g = self.bvecs
        cols = [np.ones_like(b)]
        for i, j in _COMPONENT_PAIRS:
            factor = 1.0 if i == j else 2.0
            cols.append(-factor * b * g[:, i] * g[:, j])
        return np.stack(cols, axis=1)

    def simulate(self, tensors, s0=1.0):
        """Noiseless signals [K, ...] from per-voxel tensor components [..., 6]."""
        design = self.design_matrix()[:, 1:]  # [K, 6]
        expo = np.einsum("kc,...c->k...", design, np.asarray(tensors))
        return np.asarray(s0) * np.exp(expo)


@dataclass
class TensorField:
    """Per-voxel symmetric tensors as six unique components plus validity."""

    components: np.ndarray  # [..., 6] in (xx, yy, zz, xy, xz, yz) order
    valid: np.ndarray  # boolean [...]
    ln_s0: np.ndarray = None

    @property
    def spatial_shape(self):
        return self.components.shape[:-1]

    def matrices(self):
        out = np.zeros(self.spatial_shape + (3, 3))
        for c, (i, j) in enumerate(_COMPONENT_PAIRS):
            out[..., i, j] = self.components[..., c]
            out[..., j, i] = self.components[..., c]
        return out

    @classmethod
    def from_matrices(cls, mats, valid=None):
        mats = np.asarray(mats)
        comp = np.stack([mats[..., i, j] for i, j in _COMPONENT_PAIRS], axis=-1)
        if valid is None:
            valid = np.ones(mats.shape[:-2], dtype=bool)
        return cls(comp, np.asarray(valid, dtype=bool))


def fit_tensors(signals, protocol, mask=None):
    """Log-linear least-squares tensor fit.

    signals: [K, ...spatial], magnitudes (complex input is reduced by |.|).
    Voxels with any non-positive signal are flagged invalid and excluded.
    """
    signals = np.asarray(signals)
    if np.iscomplexobj(signals):
        signals = np.abs(signals)
    k = signals.shape[0]
    if k != protocol.bvals.size:
        raise ProtocolError(
            f"signal stack has {k} volumes but the protocol lists {protocol.bvals.size}"
        )
    spatial = signals.shape[1:]
    flat = signals.reshape(k, -1)
    valid = np.all(flat > 0, axis=0)
    if mask is not None:
        valid &= np.asarray(mask, dtype=bool).reshape(-1)
    design = protocol.design_matrix()
    solver = np.linalg.pinv(design)  # [7, K]
    logs = np.where(flat > 0, np.log(flat, where=flat > 0), 0.0)
    coef = solver @ logs  # [7, N]
    comp = coef[1:].T.reshape(spatial + (6,))
    ln_s0 = coef[0].reshape(spatial)
    return TensorField(comp, valid.reshape(spatial), ln_s0)


# ---- eigen-decomposition ------------------------------------------------------------


def eig3_symmetric(mats, max_sweeps=24, tol=1e-12):
    """Cyclic Jacobi for stacked symmetric 3x3 matrices.

    Returns (eigenvalues descending [..., 3], eigenvectors [..., 3, 3] with
    eigenvectors in columns).
    """
    mats = np.asarray(mats, dtype=np.float64)
    lead = mats.shape[:-2]
    a = mats.reshape(-1, 3, 3).copy()
    n = a.shape[0]
    v = np.tile(np.eye(3), (n, 1, 1))
    scale = np.maximum(np.abs(a).max(axis=(1, 2)), 1e-300)
    for _ in range(max_sweeps):
        off = np.abs(a[:, [0, 0, 1], [1, 2, 2]]).max(axis=1)
        if np.all(off <= tol * scale):
            break
        for p, q in ((0, 1), (0, 2), (1, 2)):
            apq = a[:, p, q]
            rotate = np.abs(apq) > 1e-300
            tau = np.where(rotate, (a[:, q, q] - a[:, p, p]) / np.where(rotate, 2 * apq, 1.0), 0.0)
            t = np.where(
                rotate,
                np.sign(tau) / (np.abs(tau) + np.sqrt(1.0 + tau * tau)),
                0.0,
            )
            t = np.where(rotate & (tau == 0), 1.0, t)  # sign(0) = 0 guard
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            rot = np.tile(np.eye(3), (n, 1, 1))
            rot[:, p, p] = c
            rot[:, q, q] = c
            rot[:, p, q] = s
            rot[:, q, p] = -s
            a = np.matmul(rot.transpose(0, 2, 1), np.matmul(a, rot))
            v = np.matmul(v, rot)
    evals = a[:, [0, 1, 2], [0, 1, 2]]
    order = np.argsort(-evals, axis=1, kind="stable")
    evals = np.take_along_axis(evals, order, axis=1)
    v = np.take_along_axis(v, order[:, None, :], axis=2)
    return evals.reshape(lead + (3,)), v.reshape(lead + (3, 3))


# ---- scalar maps ----------------------------------------------------------------------


def compute_md(field: TensorField):
    """Mean diffusivity: trace / 3."""
    return field.components[..., :3].sum(axis=-1) / 3.0


def compute_fa(field: TensorField, eigenvalues=None):
    """Fractional anisotropy in [0, 1]; negative eigenvalues clamp to 0."""
    if eigenvalues is None:
        eigenvalues, _ = eig3_symmetric(field.matrices())
    lam = np.maximum(eigenvalues, 0.0)
    mean = lam.mean(axis=-1, keepdims=True)
    num = np.linalg.norm(lam - mean, axis=-1)
    den = np.linalg.norm(lam, axis=-1)
    fa = np.sqrt(1.5) * np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    return np.clip(fa, 0.0, 1.0)


# ---- local cardiac frame ---------------------------------------------------------------


@dataclass
class LocalBasis:
    """Per-voxel orthonormal (radial, circumferential, longitudinal) triad."""

    radial: np.ndarray  # [..., 3]
    circumferential: np.ndarray
    longitudinal: np.ndarray
    valid: np.ndarray  # [...]


def compute_local_basis(mask, long_axis=(0.0, 0.0, 1.0)):
    """Build the local frame from per-slice mask centroids.

    mask: boolean [H, W] or [S, H, W]. The radial direction points from the
    slice centroid to the voxel (in plane, orthogonalised against the long
    axis); circumferential = longitudinal x radial. Voxels at the centroid
    have no radial direction and are flagged invalid.
    """
    mask = np.asarray(mask, dtype=bool)
    squeeze = mask.ndim == 2
    if squeeze:
        mask = mask[None]
    s, h, w = mask.shape
    lax = np.asarray(long_axis, dtype=np.float64)
    lax = lax / np.linalg.norm(lax)
    radial = np.zeros((s, h, w, 3))
    valid = np.zeros((s, h, w), dtype=bool)
    cols, rows = np.meshgrid(np.arange(w), np.arange(h))
    for si in range(s):
        m = mask[si]
        if not m.any():
            continue
        cy = rows[m].mean()
        cx = cols[m].mean()
        vec = np.stack([cols - cx, rows - cy, np.zeros_like(cols, dtype=float)], axis=-1)
        vec -= (vec @ lax)[..., None] * lax  # in-plane relative to the long axis
        norm = np.linalg.norm(vec, axis=-1)
        ok = m & (norm > 1e-12)
        radial[si][ok] = vec[ok] / norm[ok][..., None]
        valid[si] = ok
    longitudinal = np.broadcast_to(lax, radial.shape).copy()
    circumferential = np.cross(longitudinal, radial)
    if squeeze:
        return LocalBasis(radial[0], circumferential[0], longitudinal[0], valid[0])
    return LocalBasis(radial, circumferential, longitudinal, valid)


# ---- angle maps -----------------------------------------------------------------------


def wrap_half_circle(deg):
    """Wrap angles (degrees) into [-90, 90)."""
    return (np.asarray(deg) + 90.0) % 180.0 - 90.0


@dataclass
class MapSet:
    md: np.ndarray
    fa: np.ndarray
    ha: np.ndarray
    e2a: np.ndarray
    valid: np.ndarray


DEGENERATE_REL_GAP = 1e-6


def compute_ha_e2a(field: TensorField, basis: LocalBasis):
    """Helix angle and second-eigenvector angle, both in [-90, 90).

    Eigenvector sign ambiguity is resolved before measuring (e1 toward
    +circumferential, e2 toward +cross-myocyte), so flipping any eigenvector
    leaves the maps unchanged. Voxels with lambda1 ~ lambda2 (relative gap
    < 1e-6) are flagged degenerate and excluded.
    """
    evals, evecs = eig3_symmetric(field.matrices())
    e1 = evecs[..., 0]
    e2 = evecs[..., 1]
    gap = evals[..., 0] - evals[..., 1]
    scale = np.maximum(np.abs(evals[..., 0]), 1e-300)
    nondegenerate = gap / scale >= DEGENERATE_REL_GAP
    valid = field.valid & basis.valid & nondegenerate

    # helix angle in the circumferential-longitudinal (tangent) plane
    flip1 = np.sum(e1 * basis.circumferential, axis=-1) < 0
    e1 = np.where(flip1[..., None], -e1, e1)
    ha = np.degrees(
        np.arctan2(
            np.sum(e1 * basis.longitudinal, axis=-1),
            np.sum(e1 * basis.circumferential, axis=-1),
        )
    )

    # cross-myocyte direction: radial orthogonalised against e1
    cm = basis.radial - np.sum(basis.radial * e1, axis=-1, keepdims=True) * e1
    cm_norm = np.linalg.norm(cm, axis=-1)
    ok = cm_norm > 1e-12
    valid &= ok
    cm = np.where(ok[..., None], cm / np.where(ok, cm_norm, 1.0)[..., None], 0.0)
    tangent = np.cross(e1, cm)
    flip2 = np.sum(e2 * cm, axis=-1) < 0
    e2 = np.where(flip2[..., None], -e2, e2)
    e2a = np.degrees(
        np.arctan2(np.sum(e2 * tangent, axis=-1), np.sum(e2 * cm, axis=-1))
    )
    return wrap_half_circle(ha), wrap_half_circle(e2a), valid


def compute_maps(field: TensorField, basis: LocalBasis) -> MapSet:
    evals, _ = eig3_symmetric(field.matrices())
    ha, e2a, valid = compute_ha_e2a(field, basis)
    return MapSet(
        md=compute_md(field),
        fa=compute_fa(field, evals),
        ha=ha,
        e2a=e2a,
        valid=valid,
    )
