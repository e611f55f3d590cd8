"""Deterministic pseudo-random fills (SplitMix64 + Box-Muller).

SplitMix64 is counter-based: the k-th draw from seed ``s`` is
``mix64(s + k * GAMMA)``, so whole streams vectorize with uint64 arrays and
single draws reproduce the exact same values. Gaussian variates come from
Box-Muller applied to consecutive uniform pairs; both halves of each pair are
emitted. Identical seeds give bit-identical streams for a given NumPy build.
"""

from __future__ import annotations

import numpy as np

GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_TWO53 = float(1 << 53)

DISTRIBUTIONS = ("gaussian", "uniform", "zeros", "ones")


def _mix64(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):  # uint64 wrap-around is the point
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def raw_stream(seed: int, count: int, offset: int = 0) -> np.ndarray:
    """uint64 outputs ``offset+1 .. offset+count`` of the SplitMix64 sequence."""
    idx = np.arange(offset + 1, offset + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + idx * GAMMA)


def uniforms(seed: int, count: int, offset: int = 0) -> np.ndarray:
    """float64 uniform values in [0, 1)."""
    return (raw_stream(seed, count, offset) >> np.uint64(11)).astype(np.float64) / _TWO53


def gaussians(seed: int, count: int) -> np.ndarray:
    """float64 standard normals; consecutive uniform pairs feed Box-Muller."""
    pairs = (count + 1) // 2
    raw = raw_stream(seed, 2 * pairs)
    # u1 is shifted into (0, 1] so log() is always finite.
    u1 = ((raw[0::2] >> np.uint64(11)).astype(np.float64) + 1.0) / _TWO53
    u2 = (raw[1::2] >> np.uint64(11)).astype(np.float64) / _TWO53
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    out = np.empty(2 * pairs, dtype=np.float64)
    out[0::2] = r * np.cos(theta)
    out[1::2] = r * np.sin(theta)
    return out[:count]


class Prng:
    """Stateful view of the stream; single draws match the vectorized fills."""

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._drawn = 0
        self._pending_gauss: float | None = None

    def next_u64(self) -> int:
        v = int(raw_stream(self.seed, 1, self._drawn)[0])
        self._drawn += 1
        return v

    def uniform(self) -> float:
        v = float(uniforms(self.seed, 1, self._drawn)[0])
        self._drawn += 1
        return v

    def gaussian(self) -> float:
        if self._pending_gauss is not None:
            v = self._pending_gauss
            self._pending_gauss = None
            return v
        raw = raw_stream(self.seed, 2, self._drawn)
        self._drawn += 2
        u1 = (float(raw[0] >> np.uint64(11)) + 1.0) / _TWO53
        u2 = float(raw[1] >> np.uint64(11)) / _TWO53
        r = np.sqrt(-2.0 * np.log(u1))
        self._pending_gauss = float(r * np.sin(2.0 * np.pi * u2))
        return float(r * np.cos(2.0 * np.pi * u2))


def fill(seed: int, shape, dist: str, dtype=np.float32) -> np.ndarray:
    """Deterministic row-major tensor fill.

    Raises ValueError for non-positive extents or an unknown distribution.
    """
    shape = tuple(int(s) for s in shape)
    if any(s <= 0 for s in shape):
        raise ValueError(f"extents must be positive, got {shape}")
    n = int(np.prod(shape))
    if dist == "zeros":
        flat = np.zeros(n, dtype=np.float64)
    elif dist == "ones":
        flat = np.ones(n, dtype=np.float64)
    elif dist == "uniform":
        flat = uniforms(seed, n)
    elif dist == "gaussian":
        flat = gaussians(seed, n)
    else:
        raise ValueError(f"unknown distribution {dist!r}; expected one of {DISTRIBUTIONS}")
    return flat.reshape(shape).astype(dtype)


def derive_seed(seed: int, name: str) -> int:
    """Stable per-name sub-seed (FNV-1a of the name mixed into the seed)."""
    h = 0xCBF29CE484222325
    for byte in name.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return int(_mix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) ^ np.uint64(h)))
