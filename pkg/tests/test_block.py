"""Gated-dconv MLP and the fused block: identities, ablations, hand-computed
compositions, border behaviour, and full gradient checks."""

import numpy as np

from conftest import check_gradients, make_params

from concertormer import tensor
from concertormer.autodiff import value_of
from concertormer.block import (block_param_specs, concertormer_block, ffn_block, gdmlp,
                                gdmlp_block, gdmlp_param_specs, run_block)
from concertormer.concerto import CsaConfig
from concertormer.model import init_params
from concertormer.ops import l1_mean


def test_zero_gate_leaves_bias_response(rng):
    d = 3
    params = make_params(gdmlp_param_specs(d), 3)
    params["z.w"] = np.zeros_like(params["z.w"])
    params["z.b"] = np.zeros_like(params["z.b"])
    x = tensor.tensor_from_seed(4, (5, 5, d), "gaussian")
    out = np.asarray(gdmlp(x, params))
    # U * Z == 0, so only the final conv's bias remains
    assert np.allclose(out, params["g.b"], atol=1e-7)


def test_identity_maps_square_the_input():
    """Channel-doubling copies, delta depth-wise kernel, summing compression:
    the unit computes 2*x^2 (hand-composed on a 2x2x1 input)."""
    d = 1
    params = {
        "u.w": np.array([[[[1.0, 1.0]]]], np.float32),
        "u.b": np.zeros(2, np.float32),
        "u_dw.w": np.zeros((3, 3, 1, 2), np.float32),
        "u_dw.b": np.zeros(2, np.float32),
        "z.w": np.array([[[[1.0, 1.0]]]], np.float32),
        "z.b": np.zeros(2, np.float32),
        "g.w": np.ones((1, 1, 2, 1), np.float32),
        "g.b": np.zeros(1, np.float32),
    }
    params["u_dw.w"][1, 1, 0, :] = 1.0
    x = np.array([[0.5, -1.0], [2.0, 0.25]], np.float32).reshape(2, 2, 1)
    out = np.asarray(gdmlp(x, params))
    assert np.allclose(out, 2.0 * x * x, atol=1e-6)


def test_channel_trace_doubles_then_halves(rng):
    d = 4
    params = make_params(gdmlp_param_specs(d), 5)
    x = tensor.tensor_from_seed(6, (4, 4, d), "gaussian")
    assert params["u.w"].shape == (1, 1, 4, 8)
    assert params["g.w"].shape == (1, 1, 8, 4)
    assert np.asarray(gdmlp(x, params)).shape == (4, 4, 4)


def fused_setup(seed=8, d=4, heads=1, k=2, h=8, w=8, mode="cdc"):
    cfg = CsaConfig(d_model=d, heads=heads, k=k, mode=mode)
    params = make_params(block_param_specs(cfg, "full"), seed)
    x = tensor.tensor_from_seed(seed + 1, (h, w, d), "gaussian")
    return cfg, params, x


def test_block_is_identity_with_zero_final_projection():
    cfg, params, x = fused_setup()
    params["gd.g.w"] = np.zeros_like(params["gd.g.w"])
    params["gd.g.b"] = np.zeros_like(params["gd.g.b"])
    out = np.asarray(concertormer_block(x, None, cfg, params))
    assert np.array_equal(out, x)


def test_block_reduces_to_gated_unit_when_attention_zeroed():
    """Forcing the attention output to zero leaves the residual gated unit."""
    from concertormer.ops import layer_norm

    cfg, params, x = fused_setup(seed=11)
    params["csa.proj.w"] = np.zeros_like(params["csa.proj.w"])
    params["csa.proj.b"] = np.zeros_like(params["csa.proj.b"])
    got = np.asarray(concertormer_block(x, None, cfg, params))
    xn = layer_norm(x, params["csa.ln.g"], params["csa.ln.b"])
    want = x + np.asarray(gdmlp(xn, params, "gd."))
    assert np.allclose(got, want, atol=1e-7)


def test_border_compensation_crosses_window_boundary():
    """With the depth-wise branch active, poking a pixel next to a block
    border changes outputs on the other side (blocked attention alone with an
    identity depth-wise kernel cannot do that at the unpooled branch level)."""
    cfg, params, x = fused_setup(seed=13, d=4, k=4, h=8, w=8)
    base = np.asarray(concertormer_block(x, None, cfg, params))
    poked = np.array(x)
    # single channel: a uniform across-channel shift would be erased by the
    # per-pixel normalization
    poked[3, 3, 0] += 1.0          # inside block (0,0), adjacent to the border
    out = np.asarray(concertormer_block(poked, None, cfg, params))
    across = np.abs(out[4, 3] - base[4, 3])  # first row of block (1,0)
    assert np.max(across) > 1e-6


def test_block_gradients_every_parameter(rng):
    cfg = CsaConfig(d_model=4, heads=1, k=2, mode="cdc")
    specs = block_param_specs(cfg, "full")
    params64 = init_params(specs, 17, np.float64)
    x = tensor.tensor_from_seed(18, (4, 4, 4), "gaussian", np.float64)
    target = tensor.tensor_from_seed(19, (4, 4, 4), "gaussian", np.float64)
    names = list(params64)

    def build(leaves):
        p = dict(zip(names, leaves))
        return l1_mean(run_block(x, None, cfg, "full", p), target)

    worst = check_gradients(build, [params64[n] for n in names], probes_per_array=2)
    assert worst <= 1e-4


def test_gdmlp_block_and_ffn_block_residual(rng):
    d = 4
    for kind, fn in (("gdmlp", gdmlp_block), ("ffn", ffn_block)):
        cfg = CsaConfig(d_model=d, k=2)
        params = make_params(block_param_specs(cfg, kind), 21)
        x = tensor.tensor_from_seed(22, (4, 4, d), "gaussian")
        out = np.asarray(fn(x, params))
        assert out.shape == x.shape
        zero_name = "gd.g.w" if kind == "gdmlp" else "fc2.w"
        params[zero_name] = np.zeros_like(params[zero_name])
        params[zero_name.replace(".w", ".b")] = np.zeros_like(params[zero_name.replace(".w", ".b")])
        assert np.array_equal(np.asarray(fn(x, params)), x)
