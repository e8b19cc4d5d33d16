# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled window kernels.

Same contract as ``cdtikit.backends.reference``. Window geometry is
precomputed in Python as flat index tables (cached); the hot loops run in C
for float64/complex128. When the innermost axis is unit-stride, gathers and
scatters move whole contiguous runs (memcpy / vectorised adds) instead of
indirect element loops.
"""

import numpy as np

cimport numpy as cnp
from libc.string cimport memcpy

from . import reference

cnp.import_array()

ctypedef fused value_t:
    double
    double complex

_IDX_CACHE = {}


def _geometry(spatial, kernel, stride):
    key = (tuple(spatial), tuple(kernel), tuple(stride))
    hit = _IDX_CACHE.get(key)
    if hit is None:
        idxmap = np.ascontiguousarray(
            reference._window_index_map(spatial, kernel, stride)
        )
        out = reference._out_extents(spatial, kernel, stride)
        # no negative indexing here: wraparound is disabled module-wide
        nd = len(out)
        run_len = out[nd - 1] if stride[nd - 1] == 1 else 0
        if run_len:
            starts = np.ascontiguousarray(idxmap[:, ::run_len])
        else:
            starts = idxmap[:, :0]
        if len(_IDX_CACHE) > 256:
            _IDX_CACHE.clear()
        hit = (idxmap, starts, int(run_len), out)
        _IDX_CACHE[key] = hit
    return hit


def _gather_runs(value_t[:, :, ::1] x, long long[:, ::1] starts,
                 Py_ssize_t run_len, value_t[:, ::1] cols, Py_ssize_t np_):
    cdef Py_ssize_t nb = x.shape[0], nc = x.shape[1]
    cdef Py_ssize_t nk = starts.shape[0], nr = starts.shape[1]
    cdef Py_ssize_t b, c, k, r
    cdef size_t nbytes = run_len * sizeof(value_t)
    for c in range(nc):
        for k in range(nk):
            for b in range(nb):
                for r in range(nr):
                    memcpy(&cols[c * nk + k, b * np_ + r * run_len],
                           &x[b, c, starts[k, r]], nbytes)


def _scatter_runs(value_t[:, ::1] cols, long long[:, ::1] starts,
                  Py_ssize_t run_len, value_t[:, :, ::1] x, Py_ssize_t np_):
    cdef Py_ssize_t nb = x.shape[0], nc = x.shape[1]
    cdef Py_ssize_t nk = starts.shape[0], nr = starts.shape[1]
    cdef Py_ssize_t b, c, k, r, i, src, dst
    for c in range(nc):
        for k in range(nk):
            for b in range(nb):
                for r in range(nr):
                    src = b * np_ + r * run_len
                    dst = starts[k, r]
                    for i in range(run_len):
                        x[b, c, dst + i] = x[b, c, dst + i] + cols[c * nk + k, src + i]


def _gather_idx(value_t[:, :, ::1] x, long long[:, ::1] idxmap,
                value_t[:, ::1] cols, Py_ssize_t np_):
    cdef Py_ssize_t nb = x.shape[0], nc = x.shape[1]
    cdef Py_ssize_t nk = idxmap.shape[0]
    cdef Py_ssize_t b, c, k, p
    for c in range(nc):
        for k in range(nk):
            for b in range(nb):
                for p in range(np_):
                    cols[c * nk + k, b * np_ + p] = x[b, c, idxmap[k, p]]


def _scatter_idx(value_t[:, ::1] cols, long long[:, ::1] idxmap,
                 value_t[:, :, ::1] x, Py_ssize_t np_):
    cdef Py_ssize_t nb = x.shape[0], nc = x.shape[1]
    cdef Py_ssize_t nk = idxmap.shape[0]
    cdef Py_ssize_t b, c, k, p
    for c in range(nc):
        for k in range(nk):
            for b in range(nb):
                for p in range(np_):
                    x[b, c, idxmap[k, p]] = x[b, c, idxmap[k, p]] + cols[c * nk + k, b * np_ + p]


def _pool(value_t[:, :, ::1] x, long long[:, ::1] idxmap,
          value_t[:, :, ::1] out, long long[:, :, ::1] oidx):
    cdef Py_ssize_t nb = x.shape[0], nc = x.shape[1]
    cdef Py_ssize_t nk = idxmap.shape[0], np_ = idxmap.shape[1]
    cdef Py_ssize_t b, c, k, p, best_k
    cdef double m, best, re, im
    cdef value_t v
    for b in range(nb):
        for c in range(nc):
            for p in range(np_):
                best = -1.0
                best_k = 0
                for k in range(nk):
                    v = x[b, c, idxmap[k, p]]
                    if value_t is double:
                        m = v if v >= 0 else -v
                    else:
                        re = v.real
                        im = v.imag
                        m = re * re + im * im
                    if m > best:
                        best = m
                        best_k = k
                out[b, c, p] = x[b, c, idxmap[best_k, p]]
                oidx[b, c, p] = idxmap[best_k, p]


def _pool_scatter(value_t[:, :, ::1] g, long long[:, :, ::1] idx,
                  value_t[:, :, ::1] x):
    cdef Py_ssize_t nb = g.shape[0], nc = g.shape[1], np_ = g.shape[2]
    cdef Py_ssize_t b, c, p
    for b in range(nb):
        for c in range(nc):
            for p in range(np_):
                x[b, c, idx[b, c, p]] = x[b, c, idx[b, c, p]] + g[b, c, p]


def _flat(x):
    b, c = x.shape[:2]
    return np.ascontiguousarray(x.reshape(b, c, -1))


def im2col(x, kernel, stride):
    if x.dtype not in (np.float64, np.complex128):
        return reference.im2col(x, kernel, stride)
    spatial = x.shape[2:]
    idxmap, starts, run_len, out = _geometry(spatial, kernel, stride)
    b, c = x.shape[:2]
    k, p = idxmap.shape
    cols = np.empty((c * k, b * p), dtype=x.dtype)
    xz = _flat(x)
    if run_len:
        _gather_runs(xz, starts, run_len, cols, p)
    else:
        _gather_idx(xz, idxmap, cols, p)
    return cols


def col2im(cols, kernel, stride, spatial, batch):
    if cols.dtype not in (np.float64, np.complex128):
        return reference.col2im(cols, kernel, stride, spatial, batch)
    idxmap, starts, run_len, out = _geometry(spatial, kernel, stride)
    k, p = idxmap.shape
    c = cols.shape[0] // k
    x = np.zeros((batch, c, int(np.prod(spatial))), dtype=cols.dtype)
    cz = np.ascontiguousarray(cols)
    if run_len:
        _scatter_runs(cz, starts, run_len, x, p)
    else:
        _scatter_idx(cz, idxmap, x, p)
    return x.reshape((batch, c) + tuple(spatial))


def maxpool_mag_forward(x, window, stride):
    if x.dtype not in (np.float64, np.complex128):
        return reference.maxpool_mag_forward(x, window, stride)
    spatial = x.shape[2:]
    idxmap, _, _, out = _geometry(spatial, window, stride)
    b, c = x.shape[:2]
    p = idxmap.shape[1]
    values = np.empty((b, c, p), dtype=x.dtype)
    flat_idx = np.empty((b, c, p), dtype=np.int64)
    _pool(_flat(x), idxmap, values, flat_idx)
    return values.reshape((b, c) + out), flat_idx.reshape((b, c) + out)


def maxpool_scatter(grad, flat_idx, spatial, overlapping):
    if grad.dtype not in (np.float64, np.complex128):
        return reference.maxpool_scatter(grad, flat_idx, spatial, overlapping)
    b, c = grad.shape[:2]
    n = int(np.prod(spatial))
    gx = np.zeros((b, c, n), dtype=grad.dtype)
    gz = _flat(grad)
    iz = np.ascontiguousarray(flat_idx.reshape(b, c, -1))
    _pool_scatter(gz, iz, gx)
    return gx.reshape((b, c) + tuple(spatial))
