"""Flat binary tensor container used for images, masks, and checkpoints.

Layout: 8-byte magic ``PBTENSR1``, u32 rank, u32 dims (row-major),
u8 dtype tag (0 = float32 little-endian, 1 = uint8), then raw data.
All integers are little-endian.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ValidationError

MAGIC = b"PBTENSR1"

_TAG_F32 = 0
_TAG_U8 = 1

_DTYPE_TO_TAG = {np.dtype("<f4"): _TAG_F32, np.dtype("u1"): _TAG_U8}
_TAG_TO_DTYPE = {_TAG_F32: np.dtype("<f4"), _TAG_U8: np.dtype("u1")}


def write_tensor(path: str | Path, array: np.ndarray) -> None:
    """Write a float32 or uint8 array to `path` in PBTENSR1 layout."""
    arr = np.asarray(array)  # tobytes(order="C") copies, so contiguity is irrelevant
    if arr.dtype not in _DTYPE_TO_TAG:
        raise ValidationError(
            f"unsupported dtype {arr.dtype}; only float32 and uint8 can be stored"
        )
    tag = _DTYPE_TO_TAG[arr.dtype]
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(struct.pack("<B", tag))
        fh.write(arr.tobytes(order="C"))


def read_tensor(path: str | Path) -> np.ndarray:
    """Read a PBTENSR1 file back into a numpy array."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise ValidationError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        (rank,) = struct.unpack("<I", fh.read(4))
        if rank > 8:
            raise ValidationError(f"{path}: implausible rank {rank}")
        dims = struct.unpack(f"<{rank}I", fh.read(4 * rank))
        (tag,) = struct.unpack("<B", fh.read(1))
        if tag not in _TAG_TO_DTYPE:
            raise ValidationError(f"{path}: unknown dtype tag {tag}")
        dtype = _TAG_TO_DTYPE[tag]
        n = int(np.prod(dims, dtype=np.int64)) if rank else 1
        raw = fh.read(n * dtype.itemsize)
        if len(raw) != n * dtype.itemsize:
            raise ValidationError(f"{path}: truncated payload")
        extra = fh.read(1)
        if extra:
            raise ValidationError(f"{path}: trailing bytes after payload")
    return np.frombuffer(raw, dtype=dtype).reshape(dims).copy()
