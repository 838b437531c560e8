"""MWN1 flat binary matrix format.

One record is: magic b"MWN1", then rows and cols as 64-bit little-endian
unsigned integers, then rows*cols IEEE-754 doubles, little-endian, row-major.
Files may hold several consecutive records; vectors are stored as len x 1
records and reshaped back by whoever owns the metadata (sidecars/manifests
record each tensor's ndim).
"""

from __future__ import annotations

import struct
from typing import BinaryIO, Sequence

import numpy as np

MAGIC = b"MWN1"
_HEADER = struct.Struct("<QQ")


def write_record(fh: BinaryIO, a: np.ndarray) -> int:
    """Append one matrix record; 1-D input is written as a len x 1 matrix."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2:
        raise ValueError(f"MWN1 stores 2-D matrices, got shape {a.shape}")
    fh.write(MAGIC)
    fh.write(_HEADER.pack(a.shape[0], a.shape[1]))
    payload = np.ascontiguousarray(a, dtype="<f8").tobytes()
    fh.write(payload)
    return len(MAGIC) + _HEADER.size + len(payload)


def read_record(fh: BinaryIO) -> np.ndarray:
    magic = fh.read(4)
    if magic != MAGIC:
        raise ValueError(f"bad MWN1 magic: {magic!r}")
    m, n = _HEADER.unpack(fh.read(_HEADER.size))
    count = m * n
    raw = fh.read(8 * count)
    if len(raw) != 8 * count:
        raise ValueError("truncated MWN1 record")
    return np.frombuffer(raw, dtype="<f8", count=count).astype(np.float64).reshape(m, n)


def save_matrices(path, arrays: Sequence[np.ndarray]) -> None:
    with open(path, "wb") as fh:
        for a in arrays:
            write_record(fh, a)


def load_matrices(path, count: int | None = None) -> list[np.ndarray]:
    out = []
    with open(path, "rb") as fh:
        while True:
            pos = fh.tell()
            if not fh.read(4):
                break
            fh.seek(pos)
            out.append(read_record(fh))
            if count is not None and len(out) == count:
                break
    if count is not None and len(out) != count:
        raise ValueError(f"expected {count} records, found {len(out)}")
    return out
