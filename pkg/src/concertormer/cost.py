"""Analytic cost model: multiply-accumulate and parameter counts.

Pure arithmetic over the architecture description — no tensors are allocated.
One MAC is one FLOP unit; biases, normalization, softmax, pooling and
elementwise products are charged per element. `attention_term` isolates the
q k^T and map-times-v products, the part of the cost that is exactly linear
in the block count n at fixed window size.

Besides the buildable network variants, the table includes cost-only
single-head ablations (one attention side at full or half width) and the
classical baselines (typical, windowed, transposed self-attention) for
scaling comparisons.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import ATTENTION_VARIANTS, model_param_specs
from .store import ModelConfig

COST_VARIANTS = (
    "full", "no_cdc", "plain_csa", "gdmlp", "ffn",
    "spatial_ripieno", "spatial_csa", "channel_ripieno", "channel_csa",
    "typical_sa", "window_msa", "transposed_sa",
)

_SINGLE_HEAD = ("spatial_ripieno", "spatial_csa", "channel_ripieno", "channel_csa",
                "typical_sa", "window_msa", "transposed_sa")


@dataclass
class CostBreakdown:
    flops: float = 0.0
    params: int = 0
    attention_term: float = 0.0
    by_part: dict = field(default_factory=dict)

    def add(self, part: str, flops: float, params: int = 0, attention: float = 0.0):
        self.flops += flops
        self.params += params
        self.attention_term += attention
        self.by_part[part] = self.by_part.get(part, 0.0) + flops


def _conv(cost, part, hw, kh, kw, cin_g, cout, params_only=False):
    macs = 0 if params_only else hw * (kh * kw * cin_g * cout + cout)
    cost.add(part, macs, kh * kw * cin_g * cout + cout)


def _gdmlp(cost, hw, d):
    e = 2 * d
    _conv(cost, "gdmlp", hw, 1, 1, d, e)
    _conv(cost, "gdmlp", hw, 3, 3, 1, e)
    _conv(cost, "gdmlp", hw, 1, 1, d, e)
    _conv(cost, "gdmlp", hw, 1, 1, e, d)
    cost.add("gdmlp", hw * e + hw * d)  # gate product + residual


def _ln(cost, hw, d):
    cost.add("norm", 5 * hw * d, 2 * d)


def _csa_block(cost, hh, ww, d, t, k, variant, src=None):
    """One fused attention block (the buildable variants)."""
    hw = hh * ww
    di = 2 * d
    kk = k * k
    n = hw // kk
    p = di // (4 * t)
    _ln(cost, hw, d)
    if src is not None:
        _ln(cost, hw, src)
    _conv(cost, "qkv", hw, 1, 1, d, di)
    _conv(cost, "qkv", hw, 1, 1, src if src is not None else d, di)
    _conv(cost, "qkv", hw, 1, 1, src if src is not None else d, di)
    # spatial side: per-block maps plus shared per-channel maps
    sp = 4 * t * n * kk * kk * p
    cost.add("attention", sp, 0, sp)
    cost.add("softmax", 3 * (t * n * kk * kk + t * p * kk * kk))
    # channel side
    ch = 4 * t * n * p * p * kk
    cost.add("attention", ch, 0, ch)
    cost.add("softmax", 3 * (t * n * p * p + t * kk * p * p))
    if variant == "full":
        cost.add("cdc", 10 * n * t * kk * kk, 10 * kk * kk)
        cost.add("cdc", 10 * n * t * p * p, 10 * p * p)
        cost.add("cdc", kk * kk * (t * p) ** 2 + kk * kk * t * p, (t * p) ** 2 + t * p)
        cost.add("cdc", p * p * (t * kk) ** 2 + p * p * t * kk, (t * kk) ** 2 + t * kk)
    else:
        # cross-block mean, recentring, and the learnable scalar divisors
        cost.add("scalars", 3 * t * n * kk * kk + t * p * kk * kk, 2)
        cost.add("scalars", 3 * t * n * p * p + t * kk * p * p, 2)
    if variant in ("full", "no_cdc"):
        cost.add("sca", hw * di + di * di + di + hw * di, di * di + di)
    _conv(cost, "proj", hw, 1, 1, di, di)
    cost.add("gdmlp", hw * di)  # attention + U
    _gdmlp(cost, hw, d)


def _single_head_block(cost, hh, ww, d, t, k, variant):
    """Cost-only ablations: one attention mechanism at full or half width,
    single-head, around the same gdMLP carcass."""
    hw = hh * ww
    di = 2 * d
    kk = k * k
    n = hw // kk
    _ln(cost, hw, d)
    _conv(cost, "qkv", hw, 1, 1, d, di)
    _conv(cost, "qkv", hw, 1, 1, d, di)
    _conv(cost, "qkv", hw, 1, 1, d, di)
    if variant == "spatial_ripieno":
        attn = 2 * n * kk * kk * di
        cost.add("softmax", 3 * n * kk * kk)
        cost.add("scalars", 3 * n * kk * kk, 1)
    elif variant == "spatial_csa":
        attn = 2 * n * kk * kk * (di // 2) * 2
        cost.add("softmax", 3 * (n * kk * kk + kk * kk))
        cost.add("scalars", 3 * n * kk * kk + kk * kk, 2)
    elif variant == "channel_ripieno":
        attn = 2 * n * di * di * kk
        cost.add("softmax", 3 * n * di * di)
        cost.add("scalars", 3 * n * di * di, 1)
    elif variant == "channel_csa":
        attn = 4 * n * (di // 2) ** 2 * kk
        cost.add("softmax", 3 * (n * (di // 2) ** 2 + (di // 2) ** 2))
        cost.add("scalars", 3 * n * (di // 2) ** 2 + (di // 2) ** 2, 2)
    elif variant == "typical_sa":
        attn = 2 * hw * hw * di
        cost.add("softmax", 3 * hw * hw)
    elif variant == "window_msa":
        attn = 2 * n * kk * kk * di
        cost.add("softmax", 3 * n * kk * kk)
    elif variant == "transposed_sa":
        attn = 2 * hw * di * di
        cost.add("softmax", 3 * di * di)
    else:
        raise ValueError(f"unknown single-head variant {variant!r}")
    cost.add("attention", attn, 0, attn)
    _conv(cost, "proj", hw, 1, 1, di, di)
    cost.add("gdmlp", hw * di)
    _gdmlp(cost, hw, d)


def _plain_block(cost, hh, ww, d, variant):
    hw = hh * ww
    _ln(cost, hw, d)
    if variant == "gdmlp":
        _gdmlp(cost, hw, d)
    else:  # ffn
        e = 4 * d
        _conv(cost, "ffn", hw, 1, 1, d, e)
        cost.add("ffn", hw * e)  # activation
        _conv(cost, "ffn", hw, 1, 1, e, d)
        cost.add("ffn", hw * d)  # residual


def count_cost(cfg: ModelConfig, h: int, w: int, variant: str | None = None) -> CostBreakdown:
    """Whole-network MAC and parameter counts at input resolution h x w."""
    variant = variant or cfg.variant
    if variant not in COST_VARIANTS:
        raise ValueError(f"unknown cost variant {variant!r}; expected one of {COST_VARIANTS}")
    cost = CostBreakdown()
    wb = cfg.width
    attention = variant in ATTENTION_VARIANTS or variant in _SINGLE_HEAD
    xa = variant in ATTENTION_VARIANTS

    # pyramid: 2x2 means at three reduced scales
    for s in (1, 2, 3):
        cost.add("pyramid", 5 * (h >> s) * (w >> s) * 3)
    # input embeddings
    _conv(cost, "embed", h * w, 3, 3, 3, wb)
    for s, mult in ((1, 2), (2, 3), (3, 4)):
        hw_s = (h >> s) * (w >> s)
        _conv(cost, "embed", hw_s if xa else 0, 3, 3, 3, mult * wb)

    widths = cfg.level_widths
    heads = cfg.level_heads
    scales = (0, 1, 2, 3, 2, 1, 0)
    xa_src = {1: 2 * wb, 2: 3 * wb, 3: 4 * wb, 4: 4 * wb, 5: 2 * wb, 6: wb}
    for level in range(7):
        hh, ww = h >> scales[level], w >> scales[level]
        d, t = widths[level], heads[level]
        for j in range(cfg.blocks[level]):
            src = xa_src[level] if (xa and level > 0 and j == 0) else None
            if variant in ATTENTION_VARIANTS:
                _csa_block(cost, hh, ww, d, t, cfg.k,
                           "full" if variant == "full" else variant, src)
            elif variant in _SINGLE_HEAD:
                _single_head_block(cost, hh, ww, d, t, cfg.k, variant)
            else:
                _plain_block(cost, hh, ww, d, variant)
    # resamplers
    for s, cin in ((0, wb), (1, 2 * wb), (2, 4 * wb)):
        _conv(cost, "resample", (h >> (s + 1)) * (w >> (s + 1)), 2, 2, cin, 2 * cin)
    for s, cin in ((3, 8 * wb), (2, 4 * wb), (1, 2 * wb)):
        _conv(cost, "resample", (h >> s) * (w >> s), 1, 1, cin, 2 * cin)
        if not attention or variant in _SINGLE_HEAD:
            cost.add("resample", (h >> (s - 1)) * (w >> (s - 1)) * cin // 2)  # skip add
    # output heads and their input skips
    for s, cin in ((0, wb), (1, 2 * wb), (2, 4 * wb), (3, 8 * wb)):
        hw_s = (h >> s) * (w >> s)
        _conv(cost, "head", hw_s, 3, 3, cin, 3)
        cost.add("head", hw_s * 3)

    if variant in ("full", "no_cdc", "plain_csa", "gdmlp", "ffn"):
        # exact parameter count from the buildable weight map
        cost.params = sum(int(np.prod(shape))
                          for shape, _ in model_param_specs(
                              ModelConfig(width=cfg.width, blocks=cfg.blocks, k=cfg.k,
                                          expansion=cfg.expansion, heads=cfg.heads,
                                          variant=variant)).values())
    return cost


def attention_term_flops(variant: str, cfg: ModelConfig, h: int, w: int) -> float:
    """Just the attention products for the whole model at one resolution."""
    return count_cost(cfg, h, w, variant).attention_term
