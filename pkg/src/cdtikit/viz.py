"""Map rendering to 8-bit PNG with fixed color scales.

No imaging dependency: a minimal PNG encoder (zlib deflate, filter 0) plus
two tiny colormaps. Angle maps use a cyclic hue wheel over [-90, 90) so the
wrap point is visually continuous; scalar maps use a fixed-range grayscale
(MD: 0 to 3e-3 mm^2/s, FA: 0 to 1). Voxels outside the mask render black.
"""

import struct
import zlib

import numpy as np

MD_SCALE = (0.0, 3e-3)
FA_SCALE = (0.0, 1.0)


def write_png(path, rgb):
    """Write an 8-bit RGB image [H, W, 3] uint8."""
    rgb = np.asarray(rgb, dtype=np.uint8)
    h, w = rgb.shape[:2]
    raw = b"".join(b"\x00" + rgb[row].tobytes() for row in range(h))

    def chunk(tag, payload):
        return (
            struct.pack(">I", len(payload))
            + tag
            + payload
            + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF)
        )

    header = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    blob = (
        b"\x89PNG\r\n\x1a\n"
        + chunk(b"IHDR", header)
        + chunk(b"IDAT", zlib.compress(raw, 9))
        + chunk(b"IEND", b"")
    )
    with open(path, "wb") as fh:
        fh.write(blob)


def _hsv_to_rgb(h, s, v):
    i = np.floor(h * 6.0).astype(int) % 6
    f = h * 6.0 - np.floor(h * 6.0)
    p = v * (1 - s)
    q = v * (1 - f * s)
    t = v * (1 - (1 - f) * s)
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=-1)


def angle_to_rgb(angles_deg, valid=None):
    """Cyclic color scale over [-90, 90): hue wraps where the angle wraps."""
    a = np.asarray(angles_deg, dtype=np.float64)
    hue = ((a + 90.0) % 180.0) / 180.0
    rgb = _hsv_to_rgb(hue, np.ones_like(hue), np.ones_like(hue))
    if valid is not None:
        rgb = rgb * np.asarray(valid, bool)[..., None]
    return (np.clip(rgb, 0, 1) * 255).astype(np.uint8)


def scalar_to_rgb(values, lo, hi, valid=None):
    v = (np.asarray(values, dtype=np.float64) - lo) / (hi - lo)
    v = np.clip(v, 0.0, 1.0)
    if valid is not None:
        v = v * np.asarray(valid, bool)
    gray = (v * 255).astype(np.uint8)
    return np.stack([gray, gray, gray], axis=-1)


def export_map_pngs(maps, prefix):
    """Write {prefix}_{md,fa,ha,e2a}.png with the fixed scales."""
    paths = {}
    for name, rgb in (
        ("md", scalar_to_rgb(maps.md, *MD_SCALE, valid=maps.valid)),
        ("fa", scalar_to_rgb(maps.fa, *FA_SCALE, valid=maps.valid)),
        ("ha", angle_to_rgb(maps.ha, valid=maps.valid)),
        ("e2a", angle_to_rgb(maps.e2a, valid=maps.valid)),
    ):
        path = f"{prefix}_{name}.png"
        write_png(path, rgb)
        paths[name] = path
    return paths
