"""Standalone writer for the DAFM attribute-map format.

Deliberately self-contained: the exporter talks to the counting pipeline
only through this file format, so the byte layout here must match the
consumer's documented contract exactly.

Layout (all integers little-endian):
    "DAFM" | version u32 = 1 | flags u32 | height u32 | width u32 |
    channels u32 | height*width*channels float32, row-major, channel-last
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import IoFailure

DAFM_MAGIC = b"DAFM"
DAFM_VERSION = 1
_HEADER = struct.Struct("<4s5I")


def write_dafm(probabilities: np.ndarray, path: str | Path) -> None:
    """Write per-pixel class probabilities (H, W, C) as a DAFM v1 file.

    The renormalize flag stays unset: callers must hand in values that
    already sit on the probability simplex.
    """
    array = np.ascontiguousarray(probabilities, dtype="<f4")
    if array.ndim != 3:
        raise IoFailure(f"expected (height, width, channels) data, got {array.shape}")
    height, width, channels = array.shape
    header = _HEADER.pack(DAFM_MAGIC, DAFM_VERSION, 0, height, width, channels)
    try:
        Path(path).write_bytes(header + array.tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
