"""Binary tensor container for embedding matrices, with a CSV fallback.

Layout: 8-byte magic "SEDTNSR\\0", uint32 rank, rank * uint64 dims,
row-major float64 payload, all little-endian.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"SEDTNSR\x00"


class TensorFormatError(Exception):
    pass


def save_tensor(path, array: np.ndarray) -> None:
    array = np.ascontiguousarray(array, dtype=np.float64)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", array.ndim))
        f.write(struct.pack(f"<{array.ndim}Q", *array.shape))
        f.write(array.astype("<f8").tobytes())


def load_tensor(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) + 4 or data[:len(MAGIC)] != MAGIC:
        raise TensorFormatError(f"bad magic in {path}")
    offset = len(MAGIC)
    (rank,) = struct.unpack_from("<I", data, offset)
    offset += 4
    dims = struct.unpack_from(f"<{rank}Q", data, offset)
    offset += 8 * rank
    count = int(np.prod(dims)) if rank else 1
    expected = offset + 8 * count
    if len(data) != expected:
        raise TensorFormatError(
            f"payload size mismatch in {path}: {len(data)} != {expected}")
    return np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(dims).copy()


def load_matrix(path) -> np.ndarray:
    """Load a tensor container or, for .csv paths, a 2-D CSV matrix."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=np.float64))
    return load_tensor(path)
