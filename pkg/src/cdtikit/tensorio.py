"""Binary tensor files.

Layout (little-endian): magic ``CDTI``, u8 rank, u64 extent per axis,
u8 flag (0 = real, 1 = complex), then raw float64 payload. Complex payloads
interleave (re, im) pairs, which is exactly numpy's complex128 memory layout.
Every dataset/fixture/checkpoint array in this package uses this format.
"""

import struct

import numpy as np

MAGIC = b"CDTI"
FLAG_REAL = 0
FLAG_COMPLEX = 1


class TensorFileError(IOError):
    pass


def write_tensor(path, array):
    arr = np.asarray(array)
    if np.iscomplexobj(arr):
        arr = arr.astype(np.complex128, copy=False)
        flag = FLAG_COMPLEX
    else:
        arr = arr.astype(np.float64, copy=False)
        flag = FLAG_REAL
    if arr.ndim > 255:
        raise TensorFileError("rank exceeds format limit (255)")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<B", arr.ndim))
        fh.write(np.asarray(arr.shape, dtype="<u8").tobytes())
        fh.write(struct.pack("<B", flag))
        fh.write(np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<")).tobytes())


def read_tensor(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise TensorFileError(f"{path}: bad magic {magic!r}")
        (rank,) = struct.unpack("<B", fh.read(1))
        shape = np.frombuffer(fh.read(8 * rank), dtype="<u8").astype(np.int64)
        (flag,) = struct.unpack("<B", fh.read(1))
        if flag not in (FLAG_REAL, FLAG_COMPLEX):
            raise TensorFileError(f"{path}: bad real/complex flag {flag}")
        dtype = "<c16" if flag == FLAG_COMPLEX else "<f8"
        count = int(np.prod(shape)) if rank else 1
        payload = fh.read()
    data = np.frombuffer(payload, dtype=dtype, count=count)
    if data.size != count:
        raise TensorFileError(f"{path}: truncated payload")
    out = data.astype(np.complex128 if flag == FLAG_COMPLEX else np.float64)
    return out.reshape(tuple(shape))
