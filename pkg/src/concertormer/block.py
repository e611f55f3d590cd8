"""Gated-dconv MLP and the fused single-stage block.

The gated unit expands channels (1x1), runs a depth-wise 3x3 on one branch,
multiplies it by the other branch, and compresses back (1x1). No
normalization or activation beyond the multiplicative gate. The fused block
injects the attention output into the gated branch:

    out = x + Wg((attention(x) + U) * Z)

with U, Z and the attention all consuming the same layer-normalized input and
the residual taking the raw input. Zeroing Wg makes the block the exact
identity. The depth-wise branch lets information cross window borders that
the blocked attention alone would keep separate.
"""

from __future__ import annotations

from .autodiff import add, conv2d, mul, relu
from .concerto import CsaConfig, csa_module, csa_param_specs
from .ops import layer_norm


def gdmlp_param_specs(d: int, expansion: int = 2) -> dict:
    e = expansion * d
    return {
        "u.w": ((1, 1, d, e), ("gauss_fanin",)),
        "u.b": ((e,), ("zeros",)),
        "u_dw.w": ((3, 3, 1, e), ("gauss_fanin",)),
        "u_dw.b": ((e,), ("zeros",)),
        "z.w": ((1, 1, d, e), ("gauss_fanin",)),
        "z.b": ((e,), ("zeros",)),
        "g.w": ((1, 1, e, d), ("gauss_fanin",)),
        "g.b": ((d,), ("zeros",)),
    }


def _p(params, prefix, name):
    key = prefix + name if prefix else name
    if key not in params:
        raise KeyError(f"missing parameter {key!r}")
    return params[key]


def gdmlp(x, params, prefix=""):
    """Wg((dconv(Wu x)) * (Wz x)); channels double inside and halve back."""
    u = conv2d(x, _p(params, prefix, "u.w"), _p(params, prefix, "u.b"))
    u = conv2d(u, _p(params, prefix, "u_dw.w"), _p(params, prefix, "u_dw.b"))
    z = conv2d(x, _p(params, prefix, "z.w"), _p(params, prefix, "z.b"))
    return conv2d(mul(u, z), _p(params, prefix, "g.w"), _p(params, prefix, "g.b"))


def block_param_specs(cfg: CsaConfig, variant: str = "full",
                      src_channels: int | None = None, expansion: int = 2) -> dict:
    """Ordered parameter map for one block of the given variant."""
    d = cfg.d_model
    specs: dict = {}
    if variant in ("full", "no_cdc", "plain_csa"):
        for name, spec in csa_param_specs(cfg, src_channels).items():
            specs["csa." + name] = spec
        for name, spec in gdmlp_param_specs(d, expansion).items():
            specs["gd." + name] = spec
    elif variant == "gdmlp":
        specs["ln.g"] = ((d,), ("ones",))
        specs["ln.b"] = ((d,), ("zeros",))
        for name, spec in gdmlp_param_specs(d, expansion).items():
            specs["gd." + name] = spec
    elif variant == "ffn":
        e = 4 * d
        specs.update({
            "ln.g": ((d,), ("ones",)),
            "ln.b": ((d,), ("zeros",)),
            "fc1.w": ((1, 1, d, e), ("gauss_fanin",)),
            "fc1.b": ((e,), ("zeros",)),
            "fc2.w": ((1, 1, e, d), ("gauss_fanin",)),
            "fc2.b": ((d,), ("zeros",)),
        })
    else:
        raise ValueError(f"unknown block variant {variant!r}")
    return specs


def concertormer_block(x, y, cfg: CsaConfig, params, prefix=""):
    """Fused attention + gated-dconv block with a residual around the whole
    thing. `y` is the optional cross-attention source."""
    xn = layer_norm(x, _p(params, prefix, "csa.ln.g"), _p(params, prefix, "csa.ln.b"))
    attn = csa_module(x, y, cfg, params, prefix + "csa.", normalized=xn)
    u = conv2d(xn, _p(params, prefix, "gd.u.w"), _p(params, prefix, "gd.u.b"))
    u = conv2d(u, _p(params, prefix, "gd.u_dw.w"), _p(params, prefix, "gd.u_dw.b"))
    z = conv2d(xn, _p(params, prefix, "gd.z.w"), _p(params, prefix, "gd.z.b"))
    gated = mul(add(attn, u), z)
    return add(x, conv2d(gated, _p(params, prefix, "gd.g.w"), _p(params, prefix, "gd.g.b")))


def gdmlp_block(x, params, prefix=""):
    """Residual gated-dconv block without attention (ablation baseline)."""
    xn = layer_norm(x, _p(params, prefix, "ln.g"), _p(params, prefix, "ln.b"))
    return add(x, gdmlp(xn, params, prefix + "gd."))


def ffn_block(x, params, prefix=""):
    """Residual two-layer MLP block (1x1 convs, 4x expansion, ReLU)."""
    xn = layer_norm(x, _p(params, prefix, "ln.g"), _p(params, prefix, "ln.b"))
    h = relu(conv2d(xn, _p(params, prefix, "fc1.w"), _p(params, prefix, "fc1.b")))
    return add(x, conv2d(h, _p(params, prefix, "fc2.w"), _p(params, prefix, "fc2.b")))


def run_block(x, y, cfg: CsaConfig, variant: str, params, prefix=""):
    if variant in ("full", "no_cdc", "plain_csa"):
        return concertormer_block(x, y, cfg, params, prefix)
    if variant == "gdmlp":
        return gdmlp_block(x, params, prefix)
    if variant == "ffn":
        return ffn_block(x, params, prefix)
    raise ValueError(f"unknown block variant {variant!r}")
