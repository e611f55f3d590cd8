"""Tensor creation and the binary tensor format.

Tensors are plain C-contiguous NumPy arrays, channel-last, float32 by default
(float64 for verification runs). The on-disk format is:

    magic "CCT1" | u32 ndim | ndim x u64 extents (LE) | float32 LE, row-major
"""

from __future__ import annotations

import struct
from typing import BinaryIO

import numpy as np

from . import prng

MAGIC = b"CCT1"


def tensor_from_seed(seed: int, shape, dist: str = "gaussian", dtype=np.float32) -> np.ndarray:
    """Deterministic tensor fill; see `prng.fill` for the distributions."""
    return prng.fill(seed, shape, dist, dtype=dtype)


def assert_finite(x: np.ndarray, what: str = "tensor") -> np.ndarray:
    if not np.isfinite(x).all():
        raise FloatingPointError(f"{what} contains NaN/Inf")
    return x


def write_tensor(fh: BinaryIO, x: np.ndarray) -> None:
    x = np.ascontiguousarray(x)
    fh.write(MAGIC)
    fh.write(struct.pack("<I", x.ndim))
    for s in x.shape:
        fh.write(struct.pack("<Q", s))
    fh.write(x.astype("<f4", copy=False).tobytes())


def read_tensor(fh: BinaryIO) -> np.ndarray:
    magic = fh.read(4)
    if magic != MAGIC:
        raise ValueError(f"bad tensor magic {magic!r}")
    (ndim,) = struct.unpack("<I", fh.read(4))
    shape = tuple(struct.unpack("<Q", fh.read(8))[0] for _ in range(ndim))
    count = int(np.prod(shape)) if shape else 1
    buf = fh.read(4 * count)
    if len(buf) != 4 * count:
        raise ValueError("truncated tensor data")
    return np.frombuffer(buf, dtype="<f4").reshape(shape).astype(np.float32)


def save_tensor(path, x: np.ndarray) -> None:
    with open(path, "wb") as fh:
        write_tensor(fh, x)


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return read_tensor(fh)
