"""Golden regression cases: seeded input -> expected output, stored on disk.

A case folder holds case.json plus input/expected tensors in the binary
format. Everything is regenerated from (kind, seed, params), so `gen`
followed by `check` must agree bit-exactly on the default tolerance; a
numeric tolerance is available for cases where that is ever too strict.
"""

from __future__ import annotations

import json
import os

import numpy as np

from . import tensor
from .attention_zoo import ZooWeights, csa_prototype, self_attention, transposed_sa, window_msa
from .concerto import CsaConfig, csa_module, csa_param_specs
from .block import block_param_specs, run_block
from .model import build_model, forward_multiscale, init_params
from .store import config_from_preset


def _zoo_input(seed, shape):
    return tensor.tensor_from_seed(seed, shape, "gaussian")


def _case_self_attention(seed, params):
    x = _zoo_input(seed, (16, 6))
    return x, self_attention(x, ZooWeights.from_seed(seed + 1, 6))


def _case_window_msa(seed, params):
    x = _zoo_input(seed, (8, 8, 4))
    return x, window_msa(x, 4, ZooWeights.from_seed(seed + 1, 4))


def _case_transposed(seed, params):
    x = _zoo_input(seed, (20, 5))
    return x, transposed_sa(x, ZooWeights.from_seed(seed + 1, 5))


def _case_prototype(seed, params):
    x = _zoo_input(seed, (8, 8, 4))
    return x, csa_prototype(x, 2, 2.0, 2.0, ZooWeights.from_seed(seed + 1, 4))


def _case_csa(seed, params):
    cfg = CsaConfig(d_model=params["d"], heads=params["t"], k=params["k"], mode=params["mode"])
    weights = init_params(csa_param_specs(cfg), seed + 1)
    x = _zoo_input(seed, (8, 8, cfg.d_model))
    return x, csa_module(x, None, cfg, weights)


def _case_block(seed, params):
    cfg = CsaConfig(d_model=4, heads=1, k=2, mode="cdc")
    weights = init_params(block_param_specs(cfg, "full"), seed + 1)
    x = _zoo_input(seed, (8, 8, 4))
    return x, run_block(x, None, cfg, "full", weights)


def _case_tiny_model(seed, params):
    cfg = config_from_preset("tiny")
    store = build_model(cfg, seed + 1)
    img = tensor.tensor_from_seed(seed, (64, 64, 3), "uniform")
    out = forward_multiscale(store, cfg, img)
    return img, out.values()[params["scale"]]


CASES = {
    "self_attention": (_case_self_attention, {}),
    "window_msa": (_case_window_msa, {}),
    "transposed_sa": (_case_transposed, {}),
    "csa_prototype": (_case_prototype, {}),
    "csa_split_t1": (_case_csa, {"d": 4, "t": 1, "k": 2, "mode": "split"}),
    "csa_split_t2": (_case_csa, {"d": 8, "t": 2, "k": 2, "mode": "split"}),
    "csa_cdc_t1": (_case_csa, {"d": 4, "t": 1, "k": 2, "mode": "cdc"}),
    "csa_cdc_t2": (_case_csa, {"d": 8, "t": 2, "k": 2, "mode": "cdc"}),
    "fused_block": (_case_block, {}),
    "tiny_model_o0": (_case_tiny_model, {"scale": 0}),
    "tiny_model_o3": (_case_tiny_model, {"scale": 3}),
}


def generate(suite_dir, seed: int = 2024, cases=None, tolerance: str = "bitexact") -> list:
    """Write every case; returns the list of case ids."""
    os.makedirs(suite_dir, exist_ok=True)
    written = []
    for cid, (fn, params) in CASES.items():
        if cases and cid not in cases:
            continue
        case_dir = os.path.join(suite_dir, cid)
        os.makedirs(case_dir, exist_ok=True)
        x, y = fn(seed, params)
        tensor.save_tensor(os.path.join(case_dir, "input.cct"), np.asarray(x))
        tensor.save_tensor(os.path.join(case_dir, "expected.cct"), np.asarray(y))
        meta = {"id": cid, "kind": cid, "seed": seed, "params": params,
                "tolerance": tolerance, "input": "input.cct", "expected": "expected.cct"}
        with open(os.path.join(case_dir, "case.json"), "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2)
        written.append(cid)
    return written


def check(suite_dir) -> list:
    """Recompute each stored case. Returns [(case id, ok, message)]."""
    results = []
    if not os.path.isdir(suite_dir):
        raise FileNotFoundError(f"golden suite directory not found: {suite_dir}")
    for cid in sorted(os.listdir(suite_dir)):
        case_dir = os.path.join(suite_dir, cid)
        meta_path = os.path.join(case_dir, "case.json")
        if not os.path.isfile(meta_path):
            continue
        try:
            with open(meta_path, "r", encoding="utf-8") as fh:
                meta = json.load(fh)
            if meta["kind"] not in CASES:
                raise ValueError(f"unknown case kind {meta['kind']!r}")
            fn, _ = CASES[meta["kind"]]
            stored_in = tensor.load_tensor(os.path.join(case_dir, meta["input"]))
            expected = tensor.load_tensor(os.path.join(case_dir, meta["expected"]))
            x, y = fn(meta["seed"], meta.get("params", {}))
            y = np.asarray(y)
            if not np.array_equal(np.asarray(x, dtype=np.float32), stored_in):
                results.append((cid, False, "stored input does not match regenerated input"))
                continue
            if meta["tolerance"] == "bitexact":
                ok = y.astype(np.float32).tobytes() == expected.tobytes()
                msg = "" if ok else "expected output differs bit-wise"
            else:
                tol = float(meta["tolerance"])
                diff = float(np.max(np.abs(y.astype(np.float64) - expected.astype(np.float64))))
                ok = diff <= tol
                msg = "" if ok else f"max |diff| {diff:.3e} > {tol:g}"
            results.append((cid, ok, msg))
        except Exception as exc:  # corrupt file, bad magic, ...
            results.append((cid, False, f"{type(exc).__name__}: {exc}"))
    return results
