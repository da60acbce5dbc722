"""Writer for the ``.sqft`` tensor interchange container.

Layout: 8-byte magic ``SQFTENS1``, three little-endian uint32 dims
(F, H, W), then F*H*W little-endian float32 values in C order. Files are
written to a temporary sibling and renamed into place so readers never
observe a partial file.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

TENSOR_MAGIC = b"SQFTENS1"
_DIMS = struct.Struct("<III")


def tensor_file_size(f: int, h: int, w: int) -> int:
    """Byte size of a tensor file with the given dims."""
    return len(TENSOR_MAGIC) + _DIMS.size + f * h * w * 4


def write_tensor_file(data: np.ndarray, path: str | Path) -> None:
    """Atomically write a (F, H, W) float32 array as a tensor file."""
    arr = np.ascontiguousarray(data, dtype="<f4")
    if arr.ndim != 3:
        raise ValueError(f"tensor payload must be 3-D (F, H, W), got shape {arr.shape}")
    f, h, w = arr.shape
    if f < 1 or h < 1 or w < 1:
        raise ValueError(f"tensor dims must all be >= 1, got {arr.shape}")
    path = Path(path)
    tmp = path.with_name(path.name + f".tmp-{os.getpid()}")
    try:
        with open(tmp, "wb") as fh:
            fh.write(TENSOR_MAGIC)
            fh.write(_DIMS.pack(f, h, w))
            fh.write(arr.tobytes())
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()
