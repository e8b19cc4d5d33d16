"""Pure numpy window kernels: the fallback backend.

These primitives (window gather, window scatter-add, magnitude max pooling
forward/backward) are the only pieces of the convolution stack that are not
a plain BLAS matmul. The compiled backend reimplements exactly the same
signatures in C; either backend must produce identical results.

Layout conventions: signal arrays are [batch, channel, *spatial] row-major,
float64 or complex128. Column buffers are channel-major: ``im2col`` returns
[C * K, B * P] with kernel offsets fastest within the channel block and
(batch, output position) flattened along columns, so a convolution is the
single GEMM ``w.reshape(out_ch, C*K) @ cols``.
"""

import numpy as np


def _out_extents(spatial, kernel, stride):
    out = []
    for size, k, s in zip(spatial, kernel, stride):
        if k > size:
            raise ValueError(
                f"window {tuple(kernel)} larger than padded input {tuple(spatial)}"
            )
        out.append((size - k) // s + 1)
    return tuple(out)


def _offset_slices(offsets, out, stride):
    return tuple(
        slice(o, o + s * (n - 1) + 1, s) for o, n, s in zip(offsets, out, stride)
    )


def im2col(x, kernel, stride):
    """Gather sliding windows of a padded [B, C, *spatial] array.

    Returns [C * prod(kernel), B * prod(out_spatial)].
    """
    b, c = x.shape[:2]
    spatial = x.shape[2:]
    out = _out_extents(spatial, kernel, stride)
    k = int(np.prod(kernel))
    p = int(np.prod(out))
    cols = np.empty((c, k, b, p), dtype=x.dtype)
    for ki, offs in enumerate(np.ndindex(*kernel)):
        sl = (slice(None), slice(None)) + _offset_slices(offs, out, stride)
        cols[:, ki] = x[sl].reshape(b, c, p).transpose(1, 0, 2)
    return cols.reshape(c * k, b * p)


def col2im(cols, kernel, stride, spatial, batch):
    """Scatter-add column buffers back onto a padded [B, C, *spatial] array.

    Exact adjoint of :func:`im2col` for the same kernel/stride.
    """
    out = _out_extents(spatial, kernel, stride)
    k = int(np.prod(kernel))
    c = cols.shape[0] // k
    p = int(np.prod(out))
    x = np.zeros((batch, c) + tuple(spatial), dtype=cols.dtype)
    cols4 = cols.reshape(c, k, batch, p)
    for ki, offs in enumerate(np.ndindex(*kernel)):
        sl = (slice(None), slice(None)) + _offset_slices(offs, out, stride)
        x[sl] += cols4[:, ki].transpose(1, 0, 2).reshape((batch, c) + out)
    return x


def _window_index_map(spatial, kernel, stride):
    # flat input position of every (window offset, output position) pair
    pos = np.arange(int(np.prod(spatial)), dtype=np.int64).reshape(
        (1, 1) + tuple(spatial)
    )
    k = int(np.prod(kernel))
    return im2col(pos, kernel, stride).reshape(k, -1)


def maxpool_mag_forward(x, window, stride):
    """Select the largest-magnitude element of each pooling window.

    Ties go to the lowest flat index. Returns (pooled values, flat spatial
    index of the winner per output element) so the backward pass can route
    gradients to the selected inputs only.
    """
    b, c = x.shape[:2]
    spatial = x.shape[2:]
    out = _out_extents(spatial, window, stride)
    k = int(np.prod(window))
    p = int(np.prod(out))
    cols = im2col(x, window, stride).reshape(c, k, b, p)
    sel = np.argmax(np.abs(cols), axis=1)  # first occurrence wins ties
    values = np.take_along_axis(cols, sel[:, None], axis=1)[:, 0]
    idxmap = _window_index_map(spatial, window, stride)  # [K, P]
    flat_idx = idxmap[sel, np.arange(p)[None, None, :]]
    values = values.transpose(1, 0, 2).reshape((b, c) + out)
    flat_idx = flat_idx.transpose(1, 0, 2).reshape((b, c) + out)
    return np.ascontiguousarray(values), np.ascontiguousarray(flat_idx)


def maxpool_scatter(grad, flat_idx, spatial, overlapping):
    """Scatter pooled gradients back to the selected input positions."""
    b, c = grad.shape[:2]
    n = int(np.prod(spatial))
    p = grad.reshape(b, c, -1).shape[-1]
    gx = np.zeros((b, c, n), dtype=grad.dtype)
    idx = flat_idx.reshape(b, c, p)
    g = grad.reshape(b, c, p)
    if overlapping:
        bi, ci = np.meshgrid(np.arange(b), np.arange(c), indexing="ij")
        np.add.at(gx, (bi[:, :, None], ci[:, :, None], idx), g)
    else:
        np.put_along_axis(gx, idx, g, axis=2)
    return gx.reshape((b, c) + tuple(spatial))
