"""Real and complex network operators with forward and backward passes.

Complex variants follow the split formulations used for complex-valued
CNNs:

* convolution multiplies kernel and signal as complex numbers inside each
  window: ``(c_r(a) - c_i(b)) + 1j(c_i(a) + c_r(b))``;
* transpose convolution is implemented component-wise as
  ``(tc_r(a) + tc_i(b)) + 1j(tc_i(a) - tc_r(b))``. Note the sign pattern is
  the conjugate of the convolution rule (it multiplies by the conjugate
  kernel); it is kept exactly as written rather than "corrected", so the two
  operators are intentionally not adjoint in their imaginary parts;
* sigmoid applies independently to real and imaginary parts;
* modReLU scales the magnitude by max(|z| + b, 0) and preserves phase;
* dropout draws one mask per complex element;
* max pooling selects the largest-magnitude window element;
* batch normalisation subtracts the complex mean and divides by the real
  scalar sqrt(V[z] + eps) with V[z] = E|z - E[z]|^2;
* losses compare magnitudes: mean |(|Y| - |Z|)| or mean (|Y| - |Z|)^2.

All operators run on ``Tensor`` values and are differentiable through the
tape; convolution gradients are checked against finite differences in the
test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import backends as B
from .. import tensor as T
from ..tensor import ShapeError, Tensor


_COLS_CACHE_LIMIT = 300 * 1024 * 1024  # bytes; larger buffers are regathered


def _tuplize(value, nd, name):
    if isinstance(value, int):
        return (value,) * nd
    value = tuple(int(v) for v in value)
    if len(value) != nd:
        raise ShapeError(f"{name} must have {nd} entries, got {len(value)}")
    return value


def conv_output_extent(size, kernel, stride, padding):
    out = (size + 2 * padding - kernel) // stride + 1
    if out <= 0:
        raise ShapeError(
            f"convolution output extent {out} <= 0 "
            f"(input {size}, kernel {kernel}, stride {stride}, padding {padding})"
        )
    return out


@dataclass(frozen=True)
class ConvSpec:
    """Geometry of one convolution: channels, kernel, stride, padding."""

    in_channels: int
    out_channels: int
    kernel: tuple
    stride: tuple = None
    padding: tuple = None

    def __post_init__(self):
        kernel = tuple(self.kernel) if not isinstance(self.kernel, int) else (self.kernel,)
        object.__setattr__(self, "kernel", kernel)
        nd = len(kernel)
        stride = self.stride if self.stride is not None else 1
        padding = self.padding if self.padding is not None else 0
        object.__setattr__(self, "stride", _tuplize(stride, nd, "stride"))
        object.__setattr__(self, "padding", _tuplize(padding, nd, "padding"))

    def output_shape(self, spatial):
        return tuple(
            conv_output_extent(s, k, st, p)
            for s, k, st, p in zip(spatial, self.kernel, self.stride, self.padding)
        )


def same_padding(kernel):
    """Zero padding that preserves spatial extent at stride 1 (odd kernels)."""
    return tuple((k - 1) // 2 for k in kernel)


# ---- convolution -----------------------------------------------------------------


def _check_conv_input(x, w, weight_layout_in_axis):
    nd = x.ndim - 2
    if nd < 1:
        raise ShapeError("convolution input must be [batch, channel, spatial...]")
    if w.ndim != nd + 2:
        raise ShapeError(
            f"kernel rank {w.ndim} does not match input with {nd} spatial dims"
        )
    if x.shape[1] != w.shape[weight_layout_in_axis]:
        raise ShapeError(
            f"channel mismatch: input has {x.shape[1]}, kernel expects "
            f"{w.shape[weight_layout_in_axis]}"
        )
    return nd


def conv(x, w, stride=1, padding=0):
    """N-d cross-correlation, real or complex; w is [out_ch, in_ch, *kernel].

    For complex operands this equals complex multiply-accumulate inside each
    window; with a real-dtype input and kernel it is exactly the real
    operator. im2col buffers are kept for the backward pass while they stay
    under a size cap, otherwise they are regathered.
    """
    nd = _check_conv_input(x, w, 1)
    kernel = w.shape[2:]
    stride = _tuplize(stride, nd, "stride")
    padding = _tuplize(padding, nd, "padding")
    spatial = x.shape[2:]
    out_sp = tuple(
        conv_output_extent(s, k, st, p)
        for s, k, st, p in zip(spatial, kernel, stride, padding)
    )
    if x.is_complex != w.is_complex:
        raise ShapeError("input and kernel must both be real or both complex")

    batch = x.shape[0]
    out_ch = w.shape[0]
    pad_width = ((0, 0), (0, 0)) + tuple((p, p) for p in padding)
    xp = np.pad(x.data, pad_width)
    padded_spatial = xp.shape[2:]
    cols = B.im2col(xp, kernel, stride)  # [Cin*K, B*P]
    w2 = w.data.reshape(out_ch, -1)
    y0 = w2 @ cols  # [O, B*P]
    y = np.ascontiguousarray(
        np.moveaxis(y0.reshape((out_ch, batch) + out_sp), 0, 1)
    )
    saved_cols = cols if cols.nbytes <= _COLS_CACHE_LIMIT else None

    def backward(g):
        g0 = np.ascontiguousarray(
            np.moveaxis(g.reshape(batch, out_ch, -1), 0, 1)
        ).reshape(out_ch, -1)
        cols_b = saved_cols if saved_cols is not None else B.im2col(xp, kernel, stride)
        if w.requires_grad:
            if w.is_complex:
                gw = np.conj(np.conj(g0) @ cols_b.T)  # == g0 @ conj(cols).T
            else:
                gw = g0 @ cols_b.T
            w._accumulate(gw.reshape(w.shape))
        if x.requires_grad:
            w2t = np.ascontiguousarray(T._conj(w2).T)
            gcols = w2t @ g0
            gxp = B.col2im(gcols, kernel, stride, padded_spatial, batch)
            sl = (slice(None), slice(None)) + tuple(
                slice(p, gxp.shape[i + 2] - p) for i, p in enumerate(padding)
            )
            x._accumulate(gxp[sl])

    return Tensor._node(y, (x, w), backward)


def conv_transpose(x, w, stride=1, padding=0, output_trim=0):
    """Real N-d transpose convolution; w is [in_ch, out_ch, *kernel].

    ``output_trim`` crops extra rows from the trailing edge per axis, which
    lets an axis keep its extent under stride 1 with kernel 2. Output extent
    per axis: (in - 1) * stride - 2 * padding + kernel - trim.
    """
    if x.is_complex or w.is_complex:
        raise ShapeError("conv_transpose is the real primitive; compose for complex")
    nd = _check_conv_input(x, w, 0)
    kernel = w.shape[2:]
    stride = _tuplize(stride, nd, "stride")
    padding = _tuplize(padding, nd, "padding")
    trim = _tuplize(output_trim, nd, "output_trim")
    spatial = x.shape[2:]
    full = tuple((s - 1) * st + k for s, st, k in zip(spatial, stride, kernel))
    out_sp = tuple(f - 2 * p - t for f, p, t in zip(full, padding, trim))
    if any(o <= 0 for o in out_sp):
        raise ShapeError(f"transpose convolution output shape {out_sp} is empty")

    batch = x.shape[0]
    in_ch, out_ch = w.shape[0], w.shape[1]
    x0 = np.ascontiguousarray(
        np.moveaxis(x.data.reshape(batch, in_ch, -1), 0, 1)
    ).reshape(in_ch, -1)  # [Cin, B*Pin]
    w2 = w.data.reshape(in_ch, -1)  # [Cin, Cout*K]
    cols = w2.T @ x0  # [Cout*K, B*Pin]
    y_full = B.col2im(cols, kernel, stride, full, batch)
    crop_sl = (slice(None), slice(None)) + tuple(
        slice(p, f - p - t) for f, p, t in zip(full, padding, trim)
    )
    y = np.ascontiguousarray(y_full[crop_sl])

    def backward(g):
        g_full = np.zeros((batch, out_ch) + full, dtype=g.dtype)
        g_full[crop_sl] = g
        gcols = B.im2col(g_full, kernel, stride)  # [Cout*K, B*Pin]
        if x.requires_grad:
            gx0 = w2 @ gcols  # [Cin, B*Pin]
            gx = np.moveaxis(gx0.reshape((in_ch, batch) + spatial), 0, 1)
            x._accumulate(np.ascontiguousarray(gx))
        if w.requires_grad:
            gw = x0 @ gcols.T
            w._accumulate(gw.reshape(w.shape))

    return Tensor._node(y, (x, w), backward)


def complex_conv(x, w_r, w_i, stride=1, padding=0):
    """Complex convolution from a real kernel pair; accepts real x too."""
    w = T.make_complex(w_r, w_i)
    if not x.is_complex:
        x = T.make_complex(x, Tensor(np.zeros_like(x.data)))
    return conv(x, w, stride, padding)


def complex_conv_transpose(x, w_r, w_i, stride=1, padding=0, output_trim=0):
    """Complex transpose convolution, component-wise:

    out = (tc_r(a) + tc_i(b)) + 1j (tc_i(a) - tc_r(b))

    The imaginary-part signs mirror multiplication by the conjugate kernel;
    see the module docstring.
    """
    a = T.real(x)
    b = T.imag(x)

    def tc(part, kern):
        return conv_transpose(part, kern, stride, padding, output_trim)

    re = T.add(tc(a, w_r), tc(b, w_i))
    im = T.sub(tc(a, w_i), tc(b, w_r))
    return T.make_complex(re, im)


# ---- activations -----------------------------------------------------------------


def split_sigmoid(z):
    """sigmoid(re) + 1j sigmoid(im); a real input maps to sigmoid(x) + 0.5j."""
    return T.make_complex(T.sigmoid(T.real(z)), T.sigmoid(T.imag(z)))


def mod_relu(z, bias):
    """Magnitude thresholding that preserves phase.

    out = (|z| + b) * z / |z| where |z| + b >= 0, else 0. The output at
    z == 0 is 0 with zero gradient. `bias` is a real tensor broadcastable
    against z (one scalar per channel in the network layers).
    """
    if not z.is_complex:
        raise ShapeError("mod_relu expects a complex tensor; real models use relu")
    bias_t = bias if isinstance(bias, Tensor) else Tensor(bias)
    if bias_t.is_complex:
        raise ShapeError("mod_relu bias must be real")
    m = np.abs(z.data)
    pre = m + bias_t.data  # broadcast
    active = (pre > 0) & (m > 0)
    safe_m = np.where(m > 0, m, 1.0)
    scale = np.where(active, pre / safe_m, 0.0)
    out = z.data * scale

    def backward(g):
        inner = z.data.real * g.real + z.data.imag * g.imag  # Re(conj(z) g)
        if z.requires_grad:
            gz = np.where(
                active,
                scale * g - (bias_t.data / safe_m**3) * z.data * inner,
                0.0,
            )
            z._accumulate(gz)
        if bias_t.requires_grad:
            raw = np.where(active, inner / safe_m, 0.0)
            bias_t._accumulate(raw)

    return Tensor._node(out, (z, bias_t), backward)


def complex_dropout(z, p, rng, training=True):
    """Zero whole complex elements with probability p, scale survivors by 1/(1-p).

    Real and imaginary parts always share the mask. Identity when not
    training or p == 0.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return z
    mask = (rng.random(z.shape) >= p) / (1.0 - p)
    return T.mul(z, Tensor(mask))


# ---- pooling ---------------------------------------------------------------------


def magnitude_max_pool(x, window, stride=None):
    """Per window, keep the element with the largest |z| (ties: lowest index).

    Gradients flow only to the selected element. For real non-negative
    inputs this coincides with real max pooling.
    """
    nd = x.ndim - 2
    window = _tuplize(window, nd, "window")
    stride = window if stride is None else _tuplize(stride, nd, "stride")
    spatial = x.shape[2:]
    try:
        values, idx = B.maxpool_mag_forward(x.data, window, stride)
    except ValueError as exc:
        raise ShapeError(str(exc)) from None
    overlapping = any(s < w for s, w in zip(stride, window))

    def backward(g):
        if x.requires_grad:
            x._accumulate(B.maxpool_scatter(g, idx, spatial, overlapping))

    return Tensor._node(values, (x,), backward)


def max_pool(x, window, stride=None):
    """Signed max pooling for real tensors (the classic operator)."""
    if x.is_complex:
        raise ShapeError("max_pool is for real tensors; see magnitude_max_pool")
    nd = x.ndim - 2
    window = _tuplize(window, nd, "window")
    stride = window if stride is None else _tuplize(stride, nd, "stride")
    spatial = x.shape[2:]
    k = int(np.prod(window))
    b, c = x.shape[:2]
    try:
        cols = B.im2col(x.data, window, stride).reshape(c, k, b, -1)
    except ValueError as exc:
        raise ShapeError(str(exc)) from None
    p = cols.shape[-1]
    out_sp = tuple((s - w) // st + 1 for s, w, st in zip(spatial, window, stride))
    sel = np.argmax(cols, axis=1)
    values = np.take_along_axis(cols, sel[:, None], axis=1)[:, 0]
    pos = np.arange(int(np.prod(spatial)), dtype=np.int64).reshape((1, 1) + spatial)
    idxmap = B.im2col(pos, window, stride).reshape(k, p)
    idx = idxmap[sel, np.arange(p)[None, None, :]]
    y = np.ascontiguousarray(values.transpose(1, 0, 2)).reshape((b, c) + out_sp)
    idx = np.ascontiguousarray(idx.transpose(1, 0, 2)).reshape((b, c) + out_sp)
    overlapping = any(s < w for s, w in zip(stride, window))

    def backward(g):
        if x.requires_grad:
            x._accumulate(B.maxpool_scatter(g, idx, spatial, overlapping))

    return Tensor._node(y, (x,), backward)


def avg_pool(x, window, stride=None):
    """Arithmetic window mean, applied independently to re and im."""
    nd = x.ndim - 2
    window = _tuplize(window, nd, "window")
    stride = window if stride is None else _tuplize(stride, nd, "stride")
    spatial = x.shape[2:]
    k = int(np.prod(window))
    b, c = x.shape[:2]
    try:
        cols = B.im2col(x.data, window, stride)  # [C*K, B*P]
    except ValueError as exc:
        raise ShapeError(str(exc)) from None
    p = cols.shape[-1] // b
    out_sp = tuple((s - w) // st + 1 for s, w, st in zip(spatial, window, stride))
    mean = cols.reshape(c, k, b, p).mean(axis=1)  # [C, B, P]
    y = np.ascontiguousarray(mean.transpose(1, 0, 2)).reshape((b, c) + out_sp)

    def backward(g):
        if x.requires_grad:
            g0 = g.reshape(b, c, p).transpose(1, 0, 2) / k  # [C, B, P]
            gcols = np.broadcast_to(g0[:, None], (c, k, b, p)).reshape(c * k, b * p)
            x._accumulate(B.col2im(gcols, window, stride, spatial, b))

    return Tensor._node(y, (x,), backward)


# ---- normalisation ----------------------------------------------------------------


def batch_norm_stats(x):
    """Per-channel complex mean and real variance E|z - E z|^2 over batch+spatial."""
    axes = (0,) + tuple(range(2, x.ndim))
    mu = T.tmean(x, axes, keepdims=True)
    var = T.tmean(T.magnitude_sq(T.sub(x, mu)), axes, keepdims=True)
    return mu, var


def batch_norm_apply(x, mu, var, gamma, beta, eps):
    xhat = T.div(T.sub(x, mu), T.sqrt(T.add(var, eps)))
    if gamma is None:
        return xhat
    return T.add(T.mul(xhat, gamma), beta)


# ---- losses and products ------------------------------------------------------------


def magnitude_loss(y, z, kind="l1"):
    """Mean |y|-vs-|z| discrepancy: 'l1' -> mean | |y|-|z| |, 'l2' -> mean (|y|-|z|)^2."""
    if y.shape != z.shape:
        raise ShapeError(f"loss operands differ in shape: {y.shape} vs {z.shape}")
    diff = T.sub(T.magnitude(y), T.magnitude(z))
    if kind == "l1":
        return T.tmean(T.magnitude(diff))
    if kind == "l2":
        return T.tmean(T.square(diff))
    raise ValueError(f"unknown loss kind {kind!r}")


def inner_product(w, z):
    """Bilinear sum_i w_i z_i (no conjugation on either factor)."""
    if w.shape != z.shape:
        raise ShapeError(f"inner product operands differ: {w.shape} vs {z.shape}")
    return T.tsum(T.mul(w, z))
