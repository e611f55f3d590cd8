"""Shared pieces of the whole-model finite-difference check.

The probe loss mirrors the training loss' structure (multi-scale image +
spectrum terms) but squares the differences: the absolute-value kinks of the
real loss bias central differences by O(crossing density), which is a
property of the loss, not of the gradients under test.
"""

import numpy as np

from concertormer import tensor
from concertormer.autodiff import add, mean, mul, sub
from concertormer.model import build_model, forward_multiscale, make_pyramid
from concertormer.ops import dft2
from concertormer.prng import derive_seed
from concertormer.store import config_from_preset

SEED_STORE, SEED_IMG, SEED_TARGET = 34, 35, 36
STEP = 1e-4


def setup():
    cfg = config_from_preset("tiny")
    store = build_model(cfg, seed=SEED_STORE, dtype=np.float64)
    img = tensor.tensor_from_seed(SEED_IMG, (64, 64, 3), "uniform", np.float64)
    targets = [np.asarray(p) for p in make_pyramid(
        tensor.tensor_from_seed(SEED_TARGET, (64, 64, 3), "uniform", np.float64))]
    return cfg, store, img, targets


def quadratic_probe_loss(outs, targets, lam=0.1):
    total = None
    for o, g in zip(outs.as_list(), targets):
        d = sub(o, g)
        term = mean(mul(d, d))
        if lam:
            o_re, o_im = dft2(o)
            g_re, g_im = dft2(g)
            dr, di = sub(o_re, g_re), sub(o_im, g_im)
            freq = add(mean(mul(dr, dr)), mean(mul(di, di)))
            term = add(term, mul(freq, np.float64(lam)))
        total = term if total is None else add(total, term)
    return total


def probe_index(name, size):
    return int(derive_seed(777, name) % size)


def eval_loss(cfg, store, img, targets):
    return float(np.asarray(quadratic_probe_loss(forward_multiscale(store, cfg, img), targets)))


def main(shard, num_shards):
    import json
    import sys

    cfg, store, img, targets = setup()
    results = {}
    for name in store.names()[shard::num_shards]:
        arr = store[name]
        flat = probe_index(name, arr.size)
        idx = np.unravel_index(flat, arr.shape)
        orig = float(arr[idx])
        arr[idx] = orig + STEP
        lp = eval_loss(cfg, store, img, targets)
        arr[idx] = orig - STEP
        lm = eval_loss(cfg, store, img, targets)
        arr[idx] = orig
        results[name] = [flat, (lp - lm) / (2 * STEP)]
    json.dump(results, sys.stdout)


if __name__ == "__main__":
    import sys

    main(int(sys.argv[1]), int(sys.argv[2]))
