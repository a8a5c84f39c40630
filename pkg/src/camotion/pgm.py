"""Minimal binary PGM (P5) reader and writer.

Only single-image files with maxval 255 (8-bit) or 65535 (16-bit,
big-endian as the netpbm format requires) are supported.
"""

from __future__ import annotations

import os
import re

import numpy as np

from .errors import FormatError

_HEADER = re.compile(rb"^P5\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s+(?:#[^\n]*\n\s*)*(\d+)\s")


def write_pgm(path: str | os.PathLike, image: np.ndarray, bit_depth: int = 8) -> None:
    """Write a 2D array of values in [0, 1] as a P5 PGM.

    Values are clipped to [0, 1] and rounded to the nearest code.
    """
    if image.ndim != 2:
        raise FormatError(f"PGM needs a 2D image, got shape {image.shape}")
    if bit_depth == 8:
        maxval, dtype = 255, np.dtype("u1")
    elif bit_depth == 16:
        maxval, dtype = 65535, np.dtype(">u2")
    else:
        raise FormatError(f"unsupported bit depth {bit_depth}")
    codes = np.rint(np.clip(image, 0.0, 1.0) * maxval).astype(dtype)
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n%d\n" % (w, h, maxval))
        fh.write(codes.tobytes())


def read_pgm(path: str | os.PathLike) -> tuple[np.ndarray, int]:
    """Read a P5 PGM, returning ``(image in [0, 1] as float64, bit_depth)``."""
    with open(path, "rb") as fh:
        data = fh.read()
    m = _HEADER.match(data)
    if m is None:
        raise FormatError(f"{path}: not a binary PGM")
    w, h, maxval = (int(g) for g in m.groups())
    if maxval == 255:
        dtype, bit_depth = np.dtype("u1"), 8
    elif maxval == 65535:
        dtype, bit_depth = np.dtype(">u2"), 16
    else:
        raise FormatError(f"{path}: unsupported maxval {maxval}")
    payload = data[m.end():]
    need = w * h * dtype.itemsize
    if len(payload) < need:
        raise FormatError(f"{path}: payload truncated ({len(payload)} < {need} bytes)")
    codes = np.frombuffer(payload[:need], dtype=dtype).reshape(h, w)
    return codes.astype(np.float64) / maxval, bit_depth
