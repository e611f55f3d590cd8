"""Reference attention baselines: full self-attention, windowed multi-head
self-attention, transposed (channel) self-attention, and the concerto
prototype that splits each windowed map into a shared component plus a
per-block deviation.

These run on plain arrays and serve both as demonstration subjects (the
permutation experiments) and as oracles for the efficient implementations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor
from .autodiff import softmax
from .backend import ShapeError, matmul
from .ops import block_merge, block_partition
from .prng import derive_seed


@dataclass
class ZooWeights:
    """Per-token linear projections (the 1x1-conv form of q/k/v maps)."""

    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    bq: np.ndarray
    bk: np.ndarray
    bv: np.ndarray

    @classmethod
    def from_seed(cls, seed: int, d: int, scale: float | None = None, dtype=np.float32):
        scale = scale if scale is not None else 1.0 / np.sqrt(d)
        mats = [
            tensor.tensor_from_seed(derive_seed(seed, name), (d, d), "gaussian", dtype) * dtype(scale)
            for name in ("wq", "wk", "wv")
        ]
        zeros = [np.zeros(d, dtype=dtype) for _ in range(3)]
        return cls(*mats, *zeros)

    @classmethod
    def identity(cls, d: int, dtype=np.float32):
        eye = np.eye(d, dtype=dtype)
        return cls(eye, eye.copy(), eye.copy(),
                   np.zeros(d, dtype=dtype), np.zeros(d, dtype=dtype), np.zeros(d, dtype=dtype))


def project_qkv(x: np.ndarray, w: ZooWeights):
    """x: tokens x d -> (q, k, v), each tokens x d."""
    return (matmul(x, w.wq) + w.bq, matmul(x, w.wk) + w.bk, matmul(x, w.wv) + w.bv)


def self_attention(x: np.ndarray, w: ZooWeights) -> np.ndarray:
    """Full softmax(q k^T / sqrt(d)) v over all tokens. x: tokens x d."""
    if x.ndim != 2:
        raise ShapeError(f"expected tokens x d, got {x.shape}")
    d = x.shape[1]
    q, k, v = project_qkv(x, w)
    attn = softmax(matmul(q, k.T) / np.sqrt(d).astype(x.dtype))
    return matmul(attn, v)


def window_msa(x: np.ndarray, k_side: int, w: ZooWeights) -> np.ndarray:
    """Self-attention restricted to non-overlapping k x k blocks. x: h x w x d."""
    h, wd, d = x.shape
    q, kk, v = project_qkv(x.reshape(h * wd, d), w)
    qb = block_partition(q.reshape(h, wd, d), k_side)
    kb = block_partition(kk.reshape(h, wd, d), k_side)
    vb = block_partition(v.reshape(h, wd, d), k_side)
    attn = softmax(matmul(qb, np.swapaxes(kb, -1, -2)) / np.sqrt(d).astype(x.dtype))
    return block_merge(matmul(attn, vb), h, wd, k_side)


def transposed_attention_map(x: np.ndarray, w: ZooWeights) -> np.ndarray:
    """The d x d attention map softmax(q^T k); invariant to any common
    permutation of the token axis."""
    q, k, _ = project_qkv(x, w)
    return softmax(matmul(np.ascontiguousarray(q.T), k))


def transposed_sa(x: np.ndarray, w: ZooWeights) -> np.ndarray:
    """Channel attention: softmax(q^T k) applied to v^T, returned token-major."""
    q, k, v = project_qkv(x, w)
    attn = softmax(matmul(np.ascontiguousarray(q.T), k))
    return np.ascontiguousarray(matmul(attn, np.ascontiguousarray(v.T)).T)


def csa_prototype(x: np.ndarray, k_side: int, alpha: float, beta: float,
                  w: ZooWeights) -> np.ndarray:
    """Concerto prototype on h x w x d: each block attends with the sum of its
    own deviation map and the shared cross-block average map.

    Per block i:  out_i = (R_i + C) v_i
      S_i = q_i k_i^T,  M = mean_i S_i,
      R_i = softmax((S_i - M) / alpha),  C = softmax(M / beta)
    """
    if alpha <= 0 or beta <= 0:
        raise ValueError(f"alpha and beta must be positive, got {alpha}, {beta}")
    h, wd, d = x.shape
    q, kk, v = project_qkv(x.reshape(h * wd, d), w)
    qb = block_partition(q.reshape(h, wd, d), k_side)
    kb = block_partition(kk.reshape(h, wd, d), k_side)
    vb = block_partition(v.reshape(h, wd, d), k_side)
    scores = matmul(qb, np.swapaxes(kb, -1, -2))          # n x k^2 x k^2
    shared = scores.mean(axis=0, keepdims=True)
    rip = softmax((scores - shared) / np.asarray(alpha, dtype=x.dtype))
    con = softmax(shared / np.asarray(beta, dtype=x.dtype))
    return block_merge(matmul(rip + con, vb), h, wd, k_side)
