"""Whole-network behaviour: shapes, the residual identity, determinism,
serialization, the loss, and a sampled end-to-end gradient check."""

import numpy as np
import pytest

from concertormer import tensor
from concertormer.autodiff import Tape, grad_backward, grad_of
from concertormer.backend import ShapeError
from concertormer.model import (build_model, forward_multiscale, leaf_params, loss_multiscale,
                                make_pyramid, model_param_specs, zero_final_projections)
from concertormer.ops import dft2
from concertormer.store import ModelConfig, WeightStore, config_from_preset

TINY = config_from_preset("tiny")


@pytest.fixture(scope="module")
def tiny_store():
    return build_model(TINY, seed=11)


@pytest.fixture(scope="module")
def image():
    return tensor.tensor_from_seed(5, (64, 64, 3), "uniform")


def test_output_shapes(tiny_store, image):
    out = forward_multiscale(tiny_store, TINY, image)
    assert [v.shape for v in out.values()] == [(64, 64, 3), (32, 32, 3), (16, 16, 3), (8, 8, 3)]


def test_input_validation(tiny_store):
    with pytest.raises(ShapeError):
        forward_multiscale(tiny_store, TINY, np.zeros((32, 32, 3), np.float32))
    with pytest.raises(ShapeError):
        forward_multiscale(tiny_store, TINY, np.zeros((96, 80, 3), np.float32))
    with pytest.raises(ShapeError):
        forward_multiscale(tiny_store, TINY, np.zeros((64, 64, 1), np.float32))


def test_zeroed_projections_make_identity(image):
    store = build_model(TINY, seed=3)
    zero_final_projections(store)
    out = forward_multiscale(store, TINY, image)
    pyr = [np.asarray(p) for p in make_pyramid(image)]
    for o, i in zip(out.values(), pyr):
        assert np.array_equal(o, i)


def test_forward_deterministic(tiny_store, image):
    a = forward_multiscale(tiny_store, TINY, image)
    b = forward_multiscale(tiny_store, TINY, image)
    for x, y in zip(a.values(), b.values()):
        assert x.tobytes() == y.tobytes()


def test_build_deterministic():
    a = build_model(TINY, seed=41)
    b = build_model(TINY, seed=41)
    assert a.names() == b.names()
    for n in a.names():
        assert a[n].tobytes() == b[n].tobytes()


def test_param_names_pure_function_of_config():
    specs1 = model_param_specs(TINY)
    specs2 = model_param_specs(config_from_preset("tiny"))
    assert list(specs1) == list(specs2)
    lite = model_param_specs(config_from_preset("lite"))
    assert list(specs1) != list(lite)


def test_store_roundtrip_through_file(tmp_path, tiny_store):
    path = tmp_path / "m.ccrt"
    tiny_store.save(path)
    loaded = WeightStore.load(path)
    assert loaded.names() == tiny_store.names()
    for n in loaded.names():
        assert loaded[n].tobytes() == tiny_store[n].tobytes()


def test_pyramid_shapes(image):
    pyr = make_pyramid(image)
    assert [np.asarray(p).shape for p in pyr] == [
        (64, 64, 3), (32, 32, 3), (16, 16, 3), (8, 8, 3)]


def test_loss_zero_on_identical_pyramids(tiny_store, image):
    out = forward_multiscale(tiny_store, TINY, image)
    targets = [np.array(v) for v in out.values()]
    assert float(np.asarray(loss_multiscale(out, targets))) == 0.0


def test_loss_lambda_zero_is_pure_spatial(tiny_store, image):
    out = forward_multiscale(tiny_store, TINY, image)
    pyr = [np.asarray(p) for p in make_pyramid(image)]
    spatial = sum(float(np.mean(np.abs(o - g))) for o, g in zip(out.values(), pyr))
    got = float(np.asarray(loss_multiscale(out, pyr, lam=0.0)))
    assert abs(got - spatial) <= 1e-6 * max(1.0, spatial)


def test_loss_single_scale_matches_hand_sum(rng):
    """4x4 case: image-term plus 0.1x spectrum-term, both as plain means."""
    o = rng.standard_normal((4, 4, 3)).astype(np.float64)
    g = rng.standard_normal((4, 4, 3)).astype(np.float64)
    o_re, o_im = (np.asarray(t) for t in dft2(o))
    g_re, g_im = (np.asarray(t) for t in dft2(g))
    want = (np.mean(np.abs(o - g))
            + 0.1 * (np.mean(np.abs(o_re - g_re)) + np.mean(np.abs(o_im - g_im))))

    class Outs:
        def as_list(self):
            return [o]

    with pytest.raises(ShapeError):
        loss_multiscale(Outs(), [g])  # needs the full 4-level pyramid

    from concertormer.model import MultiScaleOutput
    outs = MultiScaleOutput(o, o[:2, :2], o[:2, :2], o[:2, :2])
    targets = [g, o[:2, :2], o[:2, :2], o[:2, :2]]  # only scale 0 differs
    got = float(np.asarray(loss_multiscale(outs, targets, lam=0.1)))
    assert abs(got - want) <= 1e-6


def test_loss_shape_mismatch_rejected(tiny_store, image):
    out = forward_multiscale(tiny_store, TINY, image)
    pyr = [np.asarray(p) for p in make_pyramid(image)]
    pyr[1] = pyr[1][:, :16]
    with pytest.raises(ShapeError):
        loss_multiscale(out, pyr)


def test_gdmlp_variant_runs_without_attention(image):
    cfg = ModelConfig(width=16, blocks=(1,) * 7, variant="gdmlp")
    store = build_model(cfg, seed=2)
    out = forward_multiscale(store, cfg, image)
    assert out.values()[0].shape == (64, 64, 3)
    assert not any(".csa." in n for n in store.names())


def test_sampled_end_to_end_gradients(image):
    """Five parameter tensors sampled across the depth, float64, vs central
    differences."""
    from conftest import finite_difference, rel_err

    store64 = build_model(TINY, seed=11, dtype=np.float64)
    img = image.astype(np.float64)
    targets = [np.asarray(p) for p in make_pyramid(
        tensor.tensor_from_seed(99, (64, 64, 3), "uniform", np.float64))]
    tape = Tape()
    params = leaf_params(tape, store64)
    loss = loss_multiscale(forward_multiscale(store64, TINY, img, params=params), targets)
    grad_backward(tape, loss)

    names = ["in0.w", "enc2.blk0.csa.q.w", "latent.blk0.gd.g.w", "dec1.blk0.csa.cdc.cs.w", "out0.b"]
    rs = np.random.default_rng(0)
    for name in names:
        arr = store64[name]
        index = np.unravel_index(rs.choice(arr.size), arr.shape)

        def feval(value):
            trial = build_model(TINY, seed=11, dtype=np.float64)
            trial[name] = trial[name].copy()
            trial[name][index] = value
            outs = forward_multiscale(trial, TINY, img)
            return float(np.asarray(loss_multiscale(outs, targets)))

        h = 1e-4
        fd = (feval(arr[index] + h) - feval(arr[index] - h)) / (2 * h)
        got = float(grad_of(params[name])[index])
        assert rel_err(got, fd) <= 1e-4, (name, index, got, fd)
