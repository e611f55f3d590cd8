"""Independent per-definition oracles used across test modules.

Everything here is written against the definitions (big block-diagonal
matrices, explicit python loops), deliberately avoiding the efficient code
paths it is used to verify.
"""

import math

import numpy as np

from concertormer.attention_zoo import project_qkv
from concertormer.ops import block_merge, block_partition


def softmax_rows_oracle(scores):
    scores = np.asarray(scores, np.float64)
    out = np.zeros_like(scores)
    for i in range(scores.shape[0]):
        m = max(float(v) for v in scores[i])
        exps = [math.exp(float(v) - m) for v in scores[i]]
        s = sum(exps)
        out[i] = [e / s for e in exps]
    return out


def prototype_oracle(x, k_side, alpha, beta, w):
    """Literal evaluation of the concerto prototype: per block, the softmax of
    recentred scores plus the shared softmax of the cross-block mean."""
    h, wd, d = x.shape
    q, kk, v = project_qkv(np.asarray(x, np.float64).reshape(h * wd, d), w)
    qb = np.asarray(block_partition(q.reshape(h, wd, d), k_side))
    kb = np.asarray(block_partition(kk.reshape(h, wd, d), k_side))
    vb = np.asarray(block_partition(v.reshape(h, wd, d), k_side))
    n = qb.shape[0]
    scores = [qb[i] @ kb[i].T for i in range(n)]
    mean = sum(scores) / n
    con = softmax_rows_oracle(mean / beta)
    blocks = [(softmax_rows_oracle((scores[i] - mean) / alpha) + con) @ vb[i] for i in range(n)]
    return np.asarray(block_merge(np.stack(blocks), h, wd, k_side))


def _block_diag(mats):
    m = mats[0].shape[0]
    out = np.zeros((len(mats) * m, len(mats) * m))
    for i, b in enumerate(mats):
        out[i * m:(i + 1) * m, i * m:(i + 1) * m] = b
    return out


def _heads(x, k_side, heads):
    """h x w x (heads*ds) -> per-head list of block tensors (n, k^2, ds)."""
    h, w, c = x.shape
    ds = c // heads
    blocks = np.asarray(block_partition(np.asarray(x, np.float64), k_side))
    return [blocks[:, :, t * ds:(t + 1) * ds] for t in range(heads)]


def spatial_split_oracle(q, k, v, k_side, heads, alpha, beta, subtract_mean=True):
    """Spatial-side split-mode attention via explicit block-diagonal matrices.

    Returns (rip: t x n x k^2 x p, con: t x p x k^2 x n) to match the
    efficient layout. Each shared map comes from one retained channel,
    contracted across blocks, and is applied identically to every block.
    """
    rips, cons = [], []
    for qb, kb, vb in zip(_heads(q, k_side, heads), _heads(k, k_side, heads), _heads(v, k_side, heads)):
        n, kk, ds = qb.shape
        p = ds // 2
        scores = [qb[i][:, :p] @ kb[i][:, :p].T for i in range(n)]
        mean = sum(scores) / n
        rip_mats = [softmax_rows_oracle(((s - mean) if subtract_mean else s) / alpha) for s in scores]
        big_r = _block_diag(rip_mats)
        v_r = np.concatenate([vb[i][:, :p] for i in range(n)], axis=0)   # (n k^2, p)
        rips.append((big_r @ v_r).reshape(n, kk, p))
        con_cols = np.zeros((p, kk, n))
        for c in range(p):
            logits = sum(np.outer(qb[i][:, p + c], kb[i][:, p + c]) for i in range(n))
            shared = softmax_rows_oracle(logits / beta)
            big_c = _block_diag([shared] * n)
            col = big_c @ np.concatenate([vb[i][:, p + c] for i in range(n)])  # (n k^2,)
            con_cols[c] = col.reshape(n, kk).T
        cons.append(con_cols)
    return np.stack(rips), np.stack(cons)


def channel_split_oracle(q, k, v, k_side, heads, alpha, beta, subtract_mean=True):
    """Channel-side split-mode attention via explicit block-diagonal matrices.

    Per-block matrices are (channels x pixels); shared maps come from one
    retained pixel position, contracted across blocks.
    Returns (rip: t x n x p x k^2, con: t x k^2 x p x n)."""
    rips, cons = [], []
    for qb, kb, vb in zip(_heads(q, k_side, heads), _heads(k, k_side, heads), _heads(v, k_side, heads)):
        n, kk, ds = qb.shape
        p = ds // 2
        qm = [qb[i].T for i in range(n)]  # (ds, k^2) per block
        km = [kb[i].T for i in range(n)]
        vm = [vb[i].T for i in range(n)]
        scores = [qm[i][:p] @ km[i][:p].T for i in range(n)]
        mean = sum(scores) / n
        rip_mats = [softmax_rows_oracle(((s - mean) if subtract_mean else s) / alpha) for s in scores]
        big_r = _block_diag(rip_mats)
        v_r = np.concatenate([vm[i][:p] for i in range(n)], axis=0)      # (n p, k^2)
        rips.append((big_r @ v_r).reshape(n, p, kk))
        con_maps = np.zeros((kk, p, n))
        for pos in range(kk):
            logits = sum(np.outer(qm[i][p:, pos], km[i][p:, pos]) for i in range(n))
            shared = softmax_rows_oracle(logits / beta)
            big_c = _block_diag([shared] * n)
            col = big_c @ np.concatenate([vm[i][p:, pos] for i in range(n)])  # (n p,)
            con_maps[pos] = col.reshape(n, p).T
        cons.append(con_maps)
    return np.stack(rips), np.stack(cons)
