"""Concerto self-attention over spatial and channel axes.

The qkv width is doubled relative to the block width, then quartered across
four branches: spatial ripieno (per-block maps), spatial concertino (maps
shared across blocks, one per retained channel), channel ripieno (per-block
channel maps), and channel concertino (channel maps shared across blocks, one
per retained pixel). Branch outputs are reshaped back to image layout,
concatenated, optionally gated by a pooled channel gate, and projected.

Two attention modes:
  * "split": per-block logits get the cross-block mean subtracted and a
    learnable scalar divisor; shared logits get their own scalar divisor.
  * "cdc": the mean/scalars are replaced by learnable maps across the extra
    axis — a depth-wise 3x3 over the block grid for ripieno logits (a local
    mean), and a square mixing matrix over (heads x retained-axis) for
    concertino logits. Identity-initialised, this starts at mean-free split
    mode.

Parameters live in a flat name->array mapping (see `csa_param_specs`), so the
same code runs standalone or inside the full network's weight store.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (add, concat, conv2d, div, matmul, mean, mul, reshape,
                       slice_axis, softmax, sub, transpose, value_of)
from .backend import ShapeError
from .ops import block_merge, block_partition, global_avg_pool, layer_norm

MODES = ("split", "cdc")


@dataclass(frozen=True)
class CsaConfig:
    """Attention geometry for one block.

    d_model: channels entering the block; qkv projections emit 2*d_model.
    heads:   head count t; per-head budgets are d_internal / (2t) for each of
             the spatial and channel sides, halved again into ripieno and
             concertino parts.
    """

    d_model: int
    heads: int = 1
    k: int = 8
    mode: str = "cdc"
    sca_gate: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.d_internal % (4 * self.heads):
            raise ShapeError(
                f"2*d_model={self.d_internal} must be divisible by 4*heads={4 * self.heads}")

    @property
    def d_internal(self) -> int:
        return 2 * self.d_model

    @property
    def d_side(self) -> int:
        """Per-head channels for each of the spatial / channel sides."""
        return self.d_internal // (2 * self.heads)

    @property
    def d_part(self) -> int:
        """Per-head channels of one branch (ripieno or concertino part)."""
        return self.d_side // 2

    @property
    def branch_channels(self) -> int:
        return self.d_internal // 4


def csa_param_specs(cfg: CsaConfig, src_channels: int | None = None) -> dict:
    """Ordered name -> (shape, init) map for one attention module.

    src_channels: channel count of the cross-attention source (defaults to
    d_model for the self-attention path).
    """
    d, di = cfg.d_model, cfg.d_internal
    src = d if src_channels is None else src_channels
    t, kk = cfg.heads, cfg.k * cfg.k
    p = cfg.d_part
    specs = {
        "ln.g": ((d,), ("ones",)),
        "ln.b": ((d,), ("zeros",)),
    }
    if src_channels is not None:
        specs["ln_y.g"] = ((src,), ("ones",))
        specs["ln_y.b"] = ((src,), ("zeros",))
    specs.update({
        "q.w": ((1, 1, d, di), ("gauss", 0.02)),
        "q.b": ((di,), ("zeros",)),
        "k.w": ((1, 1, src, di), ("gauss", 0.02)),
        "k.b": ((di,), ("zeros",)),
        "v.w": ((1, 1, src, di), ("gauss", 0.02)),
        "v.b": ((di,), ("zeros",)),
    })
    if cfg.mode == "split":
        scale_s = float(np.sqrt(p))
        specs.update({
            "alpha_s": ((1,), ("const", scale_s)),
            "beta_s": ((1,), ("const", scale_s)),
            "alpha_c": ((1,), ("const", scale_s)),
            "beta_c": ((1,), ("const", scale_s)),
        })
    else:
        specs.update({
            "cdc.rs.w": ((3, 3, 1, kk * kk), ("delta_dw",)),
            "cdc.rs.b": ((kk * kk,), ("zeros",)),
            "cdc.rc.w": ((3, 3, 1, p * p), ("delta_dw",)),
            "cdc.rc.b": ((p * p,), ("zeros",)),
            "cdc.cs.w": ((t * p, t * p), ("eye",)),
            "cdc.cs.b": ((t * p,), ("zeros",)),
            "cdc.cc.w": ((t * kk, t * kk), ("eye",)),
            "cdc.cc.b": ((t * kk,), ("zeros",)),
        })
    if cfg.sca_gate:
        specs.update({
            "gate.w": ((1, 1, di, di), ("gauss", 0.02)),
            "gate.b": ((di,), ("zeros",)),
        })
    specs.update({
        "proj.w": ((1, 1, di, di), ("gauss", 0.02)),
        "proj.b": ((di,), ("zeros",)),
    })
    return specs


def _p(params, prefix, name):
    key = prefix + name if prefix else name
    if key not in params:
        raise KeyError(f"missing parameter {key!r}")
    return params[key]


def _to_heads(x_half, h, w, cfg):
    """h x w x (t*d_side) -> t x n x k^2 x d_side blocked head layout."""
    t, ds = cfg.heads, cfg.d_side
    blocks = block_partition(x_half, cfg.k)          # n x k^2 x (t*ds)
    n, kk, _ = value_of(blocks).shape
    blocks = reshape(blocks, (n, kk, t, ds))
    return transpose(blocks, (2, 0, 1, 3))           # t x n x k^2 x ds


def _grid_conv(logits, cfg, h, w, wname, bname, params, prefix):
    """Depth-wise 3x3 over the block grid: each attention-map entry becomes a
    channel of a (h/k, w/k) image, so the conv blends each block's logits with
    its neighbours' (a learnable local mean).

    logits: t x n x m x m with n = (h/k)*(w/k). Weights are shared across
    heads; heads fold into the channel axis with the kernel tiled to match.
    """
    t = cfg.heads
    gh, gw = h // cfg.k, w // cfg.k
    shape = value_of(logits).shape
    m2 = shape[2] * shape[3]
    wk = _p(params, prefix, wname)
    bk = _p(params, prefix, bname)
    if t > 1:
        wk = concat([wk] * t, axis=3)
        bk = concat([bk] * t, axis=0)
    img = reshape(transpose(logits, (1, 0, 2, 3)), (gh, gw, t * m2))
    img = conv2d(img, wk, bk, stride=1, pad="same")
    out = reshape(img, (gh * gw, t, shape[2], shape[3]))
    return transpose(out, (1, 0, 2, 3))


def _axis_mix(logits, wname, bname, params, prefix):
    """Square mixing across the combined (heads x retained-axis) dimension."""
    t, a, m, m2 = value_of(logits).shape
    flat = reshape(logits, (t * a, m * m2))
    mixed = matmul(_p(params, prefix, wname), flat)
    mixed = add(mixed, reshape(_p(params, prefix, bname), (t * a, 1)))
    return reshape(mixed, (t, a, m, m2))


def csa_spatial(q, k, v, cfg: CsaConfig, h: int, w: int, params, prefix=""):
    """Spatial-side attention on the q/k/v spatial halves (h x w x d_internal/2).

    Returns (ripieno_out: t x n x k^2 x d_part, concertino_out: t x d_part x k^2 x n).
    """
    qh, kh, vh = (_to_heads(z, h, w, cfg) for z in (q, k, v))
    p = cfg.d_part
    q_r, q_c = slice_axis(qh, 3, 0, p), slice_axis(qh, 3, p, 2 * p)
    k_r, k_c = slice_axis(kh, 3, 0, p), slice_axis(kh, 3, p, 2 * p)
    v_r, v_c = slice_axis(vh, 3, 0, p), slice_axis(vh, 3, p, 2 * p)

    logits_r = matmul(q_r, transpose(k_r, (0, 1, 3, 2)))     # t x n x k^2 x k^2
    if cfg.mode == "split":
        logits_r = sub(logits_r, mean(logits_r, axis=1, keepdims=True))
        logits_r = div(logits_r, _p(params, prefix, "alpha_s"))
    else:
        logits_r = _grid_conv(logits_r, cfg, h, w, "cdc.rs.w", "cdc.rs.b", params, prefix)
    rip = matmul(softmax(logits_r), v_r)

    # shared maps: one per retained channel, contracted across blocks
    q_c = transpose(q_c, (0, 3, 2, 1))                        # t x p x k^2 x n
    k_c = transpose(k_c, (0, 3, 2, 1))
    v_c = transpose(v_c, (0, 3, 2, 1))
    logits_c = matmul(q_c, transpose(k_c, (0, 1, 3, 2)))      # t x p x k^2 x k^2
    if cfg.mode == "split":
        logits_c = div(logits_c, _p(params, prefix, "beta_s"))
    else:
        logits_c = _axis_mix(logits_c, "cdc.cs.w", "cdc.cs.b", params, prefix)
    con = matmul(softmax(logits_c), v_c)                      # t x p x k^2 x n
    return rip, con


def csa_channel(q, k, v, cfg: CsaConfig, h: int, w: int, params, prefix=""):
    """Channel-side attention on the q/k/v channel halves.

    Per-block matrices are transposed to (channels x pixels), so block position
    survives in the block axis of the ripieno maps and pixel position in the
    extra axis of the concertino maps.

    Returns (ripieno_out: t x n x d_part x k^2, concertino_out: t x k^2 x d_part x n).
    """
    qh, kh, vh = (transpose(_to_heads(z, h, w, cfg), (0, 1, 3, 2)) for z in (q, k, v))
    p = cfg.d_part
    q_r, q_c = slice_axis(qh, 2, 0, p), slice_axis(qh, 2, p, 2 * p)
    k_r, k_c = slice_axis(kh, 2, 0, p), slice_axis(kh, 2, p, 2 * p)
    v_r, v_c = slice_axis(vh, 2, 0, p), slice_axis(vh, 2, p, 2 * p)

    logits_r = matmul(q_r, transpose(k_r, (0, 1, 3, 2)))      # t x n x p x p
    if cfg.mode == "split":
        logits_r = sub(logits_r, mean(logits_r, axis=1, keepdims=True))
        logits_r = div(logits_r, _p(params, prefix, "alpha_c"))
    else:
        logits_r = _grid_conv(logits_r, cfg, h, w, "cdc.rc.w", "cdc.rc.b", params, prefix)
    rip = matmul(softmax(logits_r), v_r)                      # t x n x p x k^2

    q_c = transpose(q_c, (0, 3, 2, 1))                        # t x k^2 x p x n
    k_c = transpose(k_c, (0, 3, 2, 1))
    v_c = transpose(v_c, (0, 3, 2, 1))
    logits_c = matmul(q_c, transpose(k_c, (0, 1, 3, 2)))      # t x k^2 x p x p
    if cfg.mode == "split":
        logits_c = div(logits_c, _p(params, prefix, "beta_c"))
    else:
        logits_c = _axis_mix(logits_c, "cdc.cc.w", "cdc.cc.b", params, prefix)
    con = matmul(softmax(logits_c), v_c)                      # t x k^2 x p x n
    return rip, con


def mixing_concat(rip_s, con_s, rip_c, con_c, cfg: CsaConfig, h: int, w: int):
    """Reshape the four branch outputs to image layout and concatenate
    (spatial ripieno, spatial concertino, channel ripieno, channel concertino)."""
    t, p, kk = cfg.heads, cfg.d_part, cfg.k * cfg.k
    n = (h // cfg.k) * (w // cfg.k)
    expect = {
        "spatial ripieno": ((t, n, kk, p), rip_s),
        "spatial concertino": ((t, p, kk, n), con_s),
        "channel ripieno": ((t, n, p, kk), rip_c),
        "channel concertino": ((t, kk, p, n), con_c),
    }
    for name, (shape, val) in expect.items():
        if value_of(val).shape != shape:
            raise ShapeError(f"{name} branch has shape {value_of(val).shape}, expected {shape}")

    def merge(x):
        return block_merge(reshape(x, (n, kk, t * p)), h, w, cfg.k)

    parts = [
        merge(transpose(rip_s, (1, 2, 0, 3))),   # (n, k^2, t, p)
        merge(transpose(con_s, (3, 2, 0, 1))),
        merge(transpose(rip_c, (1, 3, 0, 2))),
        merge(transpose(con_c, (3, 1, 0, 2))),
    ]
    return concat(parts, axis=2)


def sca_project(xa, cfg: CsaConfig, params, prefix=""):
    """Pooled channel gate (optional) followed by the output projection."""
    gated = xa
    if cfg.sca_gate:
        pooled = global_avg_pool(xa)
        gate = conv2d(pooled, _p(params, prefix, "gate.w"), _p(params, prefix, "gate.b"))
        gated = mul(gate, xa)
    return conv2d(gated, _p(params, prefix, "proj.w"), _p(params, prefix, "proj.b"))


def csa_module(x, y, cfg: CsaConfig, params, prefix="", normalized=None):
    """Full attention module: normalize, project q/k/v at doubled width, run
    both attention sides on their halves, mix, gate, project.

    y, when given, supplies k/v (cross-attention); it must match x spatially.
    `normalized` optionally reuses an externally computed layer_norm(x).
    Returns h x w x 2*d_model.
    """
    h, w, d = value_of(x).shape
    if d != cfg.d_model:
        raise ShapeError(f"input has {d} channels, config expects {cfg.d_model}")
    if h % cfg.k or w % cfg.k:
        raise ShapeError(f"spatial extents {h}x{w} not divisible by k={cfg.k}")
    xn = normalized if normalized is not None else layer_norm(
        x, _p(params, prefix, "ln.g"), _p(params, prefix, "ln.b"))
    if y is None:
        src = xn
    else:
        yh, yw, _ = value_of(y).shape
        if (yh, yw) != (h, w):
            raise ShapeError(f"cross-attention source is {yh}x{yw}, input is {h}x{w}")
        src = layer_norm(y, _p(params, prefix, "ln_y.g"), _p(params, prefix, "ln_y.b"))
    q = conv2d(xn, _p(params, prefix, "q.w"), _p(params, prefix, "q.b"))
    k = conv2d(src, _p(params, prefix, "k.w"), _p(params, prefix, "k.b"))
    v = conv2d(src, _p(params, prefix, "v.w"), _p(params, prefix, "v.b"))
    half = cfg.d_internal // 2
    qs, qc = slice_axis(q, 2, 0, half), slice_axis(q, 2, half, 2 * half)
    ks, kc = slice_axis(k, 2, 0, half), slice_axis(k, 2, half, 2 * half)
    vs, vc = slice_axis(v, 2, 0, half), slice_axis(v, 2, half, 2 * half)
    rip_s, con_s = csa_spatial(qs, ks, vs, cfg, h, w, params, prefix)
    rip_c, con_c = csa_channel(qc, kc, vc, cfg, h, w, params, prefix)
    xa = mixing_concat(rip_s, con_s, rip_c, con_c, cfg, h, w)
    return sca_project(xa, cfg, params, prefix)
