"""Structured operations composed from autodiff primitives.

Everything here works on `Node`s and on plain arrays alike, and is
differentiable when given nodes. Layout helpers are pure reshuffles (exact
inverses); `dft2` is a direct transform via cos/sin matrices so no external
FFT is involved.
"""

from __future__ import annotations

import numpy as np

from .autodiff import (abs_, add, div, matmul, mean, mul, reshape, sqrt_,
                       sub, transpose, value_of)


def _shape(x):
    return value_of(x).shape


def block_partition(x, k: int):
    """h x w x c -> n x k^2 x c with blocks enumerated row-major."""
    h, w, c = _shape(x)
    if h % k or w % k:
        raise ValueError(f"extents {h}x{w} not divisible by block side {k}")
    x = reshape(x, (h // k, k, w // k, k, c))
    x = transpose(x, (0, 2, 1, 3, 4))
    return reshape(x, ((h // k) * (w // k), k * k, c))


def block_merge(xb, h: int, w: int, k: int):
    """Inverse of `block_partition`."""
    n, kk, c = _shape(xb)
    if kk != k * k or n != (h // k) * (w // k):
        raise ValueError(f"block tensor {_shape(xb)} does not match {h}x{w}, k={k}")
    x = reshape(xb, (h // k, w // k, k, k, c))
    x = transpose(x, (0, 2, 1, 3, 4))
    return reshape(x, (h, w, c))


def pixel_shuffle(x, r: int):
    """h x w x (r^2 c) -> rh x rw x c (depth-to-space)."""
    h, w, c = _shape(x)
    if c % (r * r):
        raise ValueError(f"channels {c} not divisible by r^2={r * r}")
    co = c // (r * r)
    x = reshape(x, (h, w, r, r, co))
    x = transpose(x, (0, 2, 1, 3, 4))
    return reshape(x, (h * r, w * r, co))


def pixel_unshuffle(x, r: int):
    """Inverse of `pixel_shuffle`."""
    h, w, c = _shape(x)
    if h % r or w % r:
        raise ValueError(f"extents {h}x{w} not divisible by r={r}")
    x = reshape(x, (h // r, r, w // r, r, c))
    x = transpose(x, (0, 2, 1, 3, 4))
    return reshape(x, (h // r, w // r, c * r * r))


def bilinear_downsample_half(x):
    """Half-resolution downsample; each output pixel is its 2x2 block mean."""
    h, w, c = _shape(x)
    if h % 2 or w % 2:
        raise ValueError(f"extents {h}x{w} must be even")
    x = reshape(x, (h // 2, 2, w // 2, 2, c))
    return mean(x, axis=(1, 3))


def global_avg_pool(x):
    """h x w x c -> 1 x 1 x c mean."""
    return mean(x, axis=(0, 1), keepdims=True)


def layer_norm(x, gamma, beta, eps: float = 1e-6):
    """Normalization over the channel axis, per pixel."""
    mu = mean(x, axis=-1, keepdims=True)
    xc = sub(x, mu)
    var = mean(mul(xc, xc), axis=-1, keepdims=True)
    dtype = value_of(x).dtype
    inv = div(xc, sqrt_(add(var, np.asarray(eps, dtype=dtype))))
    return add(mul(inv, gamma), beta)


_DFT_CACHE: dict = {}


def _dft_mats(n: int, dtype) -> tuple[np.ndarray, np.ndarray]:
    key = (n, np.dtype(dtype).name)
    if key not in _DFT_CACHE:
        idx = np.arange(n, dtype=np.float64)
        ang = 2.0 * np.pi * np.outer(idx, idx) / n
        _DFT_CACHE[key] = (np.cos(ang).astype(dtype), np.sin(ang).astype(dtype))
    return _DFT_CACHE[key]


def dft2(x):
    """Unnormalized forward 2-D DFT per channel; returns (real, imag)."""
    h, w, c = _shape(x)
    dtype = value_of(x).dtype
    ch, sh = _dft_mats(h, dtype)
    cw, sw = _dft_mats(w, dtype)
    # transform rows (the y axis): t[u, x, c] = sum_y e^{-2pi i u y / h} x[y, x, c]
    xf = reshape(x, (h, w * c))
    tre = reshape(matmul(ch, xf), (h, w, c))
    tim = reshape(matmul(-sh, xf), (h, w, c))
    # transform columns: out[u, v, c] = sum_x e^{-2pi i v x / w} t[u, x, c]
    tre = transpose(tre, (0, 2, 1))  # (h, c, w)
    tim = transpose(tim, (0, 2, 1))
    # (a + bi)(cos - i sin) = (a cos + b sin) + i (b cos - a sin)
    re = add(matmul(tre, cw), matmul(tim, sw))
    im = sub(matmul(tim, cw), matmul(tre, sw))
    return transpose(re, (0, 2, 1)), transpose(im, (0, 2, 1))


def l1_mean(a, b):
    """Mean absolute difference."""
    return mean(abs_(sub(a, b)))
