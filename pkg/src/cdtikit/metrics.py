"""Image and map quality metrics plus the aggregation/significance protocol.

Conventions:

* complex images are compared by magnitude;
* PSNR peaks at the target image's maximum intensity and returns +inf for
  identical images;
* SSIM uses a uniform sliding window (default 7x7) over valid positions,
  population (ddof=0) statistics, c1 = (0.01 L)^2, c2 = (0.03 L)^2 with L
  the target's value range;
* MAAE wraps 180-degree-periodic angle maps: per-voxel error is |d| when
  |d| < 90 and 180 - |d| otherwise, so it never exceeds 90;
* aggregation reports median and inter-quartile range with
  linear-interpolation quantiles;
* the Wilcoxon signed-rank test enumerates the exact conditional null
  distribution for n <= 20 (ties handled through midranks) and falls back
  on the tie-corrected normal approximation with continuity correction.
"""

from __future__ import annotations

import math
import warnings

import numpy as np


class MetricError(ValueError):
    """Metric undefined for the given inputs (e.g. empty mask)."""


def _magnitude(img):
    img = np.asarray(img)
    return np.abs(img) if np.iscomplexobj(img) else img.astype(np.float64, copy=False)


def _check_same_shape(x, y):
    if x.shape != y.shape:
        raise MetricError(f"images differ in shape: {x.shape} vs {y.shape}")


def mae(pred, target, mask=None):
    """Mean absolute difference, over the mask when given."""
    x = _magnitude(pred)
    y = _magnitude(target)
    _check_same_shape(x, y)
    diff = np.abs(x - y)
    if mask is None:
        return float(diff.mean())
    mask = np.asarray(mask, dtype=bool)
    _check_same_shape(diff, mask)
    if not mask.any():
        raise MetricError("mae is undefined on an empty mask")
    return float(diff[mask].mean())


def psnr(pred, target):
    """10 log10(MAX^2 / MSE) with MAX the target's peak intensity."""
    x = _magnitude(pred)
    y = _magnitude(target)
    _check_same_shape(x, y)
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return math.inf
    peak = float(y.max())
    return 10.0 * math.log10(peak * peak / mse)


def ssim(pred, target, window=7, data_range=None):
    """Mean local structural similarity over sliding uniform windows.

    Windows larger than the image shrink to the image (single window) with a
    warning. Returns a value in [-1, 1]; identical inputs give exactly 1.
    """
    x = _magnitude(pred)
    y = _magnitude(target)
    _check_same_shape(x, y)
    if x.ndim != 2:
        raise MetricError("ssim expects 2D images")
    smallest = min(x.shape)
    if window > smallest:
        warnings.warn(
            f"ssim window {window} larger than image {x.shape}; shrinking to {smallest}",
            stacklevel=2,
        )
        window = smallest
    if data_range is None:
        # joint range keeps the metric symmetric in its arguments
        data_range = float(max(x.max(), y.max()) - min(x.min(), y.min()))
    if data_range <= 0:
        data_range = 1.0  # degenerate constant images; keeps c1, c2 positive
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2

    win = (window, window)
    xw = np.lib.stride_tricks.sliding_window_view(x, win)
    yw = np.lib.stride_tricks.sliding_window_view(y, win)
    mu_x = xw.mean(axis=(-2, -1))
    mu_y = yw.mean(axis=(-2, -1))
    var_x = (xw * xw).mean(axis=(-2, -1)) - mu_x * mu_x
    var_y = (yw * yw).mean(axis=(-2, -1)) - mu_y * mu_y
    cov = (xw * yw).mean(axis=(-2, -1)) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


def maae(pred, target, mask=None):
    """Mean angle absolute error (degrees) for maps defined on [-90, 90)."""
    x = np.asarray(pred, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64)
    _check_same_shape(x, y)
    for name, arr in (("pred", x), ("target", y)):
        if arr.size and (arr.min() < -90.0 or arr.max() >= 90.0):
            raise MetricError(f"{name} angles must lie in [-90, 90)")
    d = np.abs(x - y)
    err = np.where(d < 90.0, d, 180.0 - d)
    if mask is None:
        if err.size == 0:
            raise MetricError("maae of empty input")
        return float(err.mean())
    mask = np.asarray(mask, dtype=bool)
    _check_same_shape(err, mask)
    if not mask.any():
        raise MetricError("maae is undefined on an empty mask")
    return float(err[mask].mean())


def aggregate(values):
    """(median, IQR) with linear-interpolation quantiles."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise MetricError("aggregate of empty value list")
    q1, med, q3 = np.percentile(values, [25.0, 50.0, 75.0])
    return float(med), float(q3 - q1)


# ---- Wilcoxon signed-rank --------------------------------------------------------------


def _midranks(values):
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=np.float64)
    sv = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def signed_rank_null_pmf(doubled_ranks):
    """Exact null pmf of the doubled W+ statistic by subset enumeration.

    `doubled_ranks` are integer 2x midranks; the returned array has
    pmf[w] = P(2 W+ = w) under random independent signs.
    """
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    for r in doubled_ranks:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: counts.size - r]
        counts = counts + shifted
    return counts / counts.sum()


def wilcoxon_signed_rank(a, b, exact_limit=20):
    """Two-sided signed-rank test on paired samples; returns the p-value.

    Zero differences are discarded first; if every difference is zero the
    p-value is 1. At least 5 nonzero differences are required otherwise.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise MetricError("paired samples must be equal-length 1D sequences")
    d = a - b
    d = d[d != 0]
    n = d.size
    if n == 0:
        return 1.0
    if n < 5:
        raise MetricError(f"need >= 5 nonzero differences, got {n}")
    ranks = _midranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())

    if n <= exact_limit:
        doubled = np.rint(2.0 * ranks).astype(np.int64)
        pmf = signed_rank_null_pmf(doubled)
        w2 = int(round(2.0 * w_plus))
        lower = pmf[: w2 + 1].sum()
        upper = pmf[w2:].sum()
        return float(min(1.0, 2.0 * min(lower, upper)))

    mu = n * (n + 1) / 4.0
    sigma_sq = n * (n + 1) * (2 * n + 1) / 24.0
    _, tie_counts = np.unique(np.abs(d), return_counts=True)
    sigma_sq -= float(((tie_counts**3 - tie_counts) / 48.0).sum())
    sigma = math.sqrt(sigma_sq)
    delta = w_plus - mu
    z = (delta - 0.5 * math.copysign(1.0, delta)) / sigma if delta != 0 else 0.0
    p = 2.0 * 0.5 * math.erfc(abs(z) / math.sqrt(2.0))
    return float(min(1.0, p))
