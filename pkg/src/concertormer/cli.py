"""Command-line analysis surface.

Subcommands: cost, bench, kernbench, golden gen|check, permtest, infer,
overfit. Every command is deterministic given its flags and seed (wall-time
measurements excepted). Exit codes: 0 success, 1 property/golden failure,
2 usage error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time

import numpy as np

from . import backend, tensor
from .attention_zoo import ZooWeights, csa_prototype, self_attention, transposed_attention_map, window_msa
from .backend import ShapeError
from .concerto import CsaConfig, csa_module, csa_param_specs
from .cost import COST_VARIANTS, count_cost
from .demo import overfit
from .golden import CASES, check as golden_check, generate as golden_generate
from .image_io import infer_tiled, read_png, write_png
from .model import init_params
from .prng import uniforms
from .store import ModelConfig, PRESETS, WeightStore, config_from_preset, load_config

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3

BENCH_VARIANTS = ("csa", "csa_split", "typical_sa", "window_msa", "transposed_sa")


def _load_cfg(args) -> ModelConfig:
    if getattr(args, "config", None):
        return load_config(args.config)
    return config_from_preset(getattr(args, "preset", "lite") or "lite")


def _parse_sizes(text: str):
    sizes = []
    for part in text.split(","):
        part = part.strip().lower()
        if not part:
            continue
        if "x" in part:
            h, w = part.split("x", 1)
        else:
            h = w = part
        sizes.append((int(h), int(w)))
    return sizes


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _table(header, rows):
    widths = [max(len(str(header[i])), *(len(str(r[i])) for r in rows)) if rows else len(str(header[i]))
              for i in range(len(header))]
    lines = ["  ".join(str(h).ljust(w) for h, w in zip(header, widths))]
    for r in rows:
        lines.append("  ".join(str(c).ljust(w) for c, w in zip(r, widths)))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# cost


def cmd_cost(args) -> int:
    cfg = _load_cfg(args)
    variants = args.variant or ["full", "no_cdc", "plain_csa", "gdmlp", "ffn",
                                "spatial_csa", "channel_ripieno", "channel_csa"]
    rows = []
    for v in variants:
        if v not in COST_VARIANTS:
            print(f"unknown variant {v!r}; choices: {', '.join(COST_VARIANTS)}", file=sys.stderr)
            return EXIT_USAGE
        c = count_cost(cfg, args.height, args.width, v)
        rows.append((v, args.height, args.width, f"{c.flops / 1e9:.2f}G",
                     f"{c.params / 1e6:.2f}M", f"{c.attention_term / 1e9:.3f}G"))
    print(_table(("variant", "h", "w", "flops", "params", "attn_term"), rows))
    if args.out:
        _write_csv(args.out, ("variant", "h", "w", "flops", "params"),
                   [(v, h, w, f"{count_cost(cfg, h, w, v).flops:.0f}",
                     count_cost(cfg, h, w, v).params) for v, h, w, *_ in rows])
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench


def _bench_layer(variant: str, h: int, w: int, dim: int, seed: int, dtype):
    """Build one attention layer and return (runner, analytic attention-term
    flops, params)."""
    hw = h * w
    if variant in ("typical_sa", "transposed_sa"):
        x = tensor.tensor_from_seed(seed, (hw, dim), "gaussian", dtype)
        zw = ZooWeights.from_seed(seed + 1, dim, dtype=dtype)
        params = 3 * (dim * dim + dim)
        if variant == "typical_sa":
            return (lambda: self_attention(x, zw)), 2.0 * hw * hw * dim, params
        return (lambda: transposed_attention_map(x, zw)), 2.0 * hw * dim * dim, params
    if variant == "window_msa":
        if h % 8 or w % 8:
            raise ShapeError(f"{h}x{w} not divisible by the window side 8")
        x = tensor.tensor_from_seed(seed, (h, w, dim), "gaussian", dtype)
        zw = ZooWeights.from_seed(seed + 1, dim, dtype=dtype)
        n = hw // 64
        return (lambda: window_msa(x, 8, zw)), 2.0 * n * 64 * 64 * dim, 3 * (dim * dim + dim)
    if variant in ("csa", "csa_split"):
        cfg = CsaConfig(d_model=dim, heads=1, k=8,
                        mode="cdc" if variant == "csa" else "split")
        if h % cfg.k or w % cfg.k:
            raise ShapeError(f"{h}x{w} not divisible by the block side {cfg.k}")
        weights = init_params(csa_param_specs(cfg), seed + 1, dtype)
        x = tensor.tensor_from_seed(seed, (h, w, dim), "gaussian", dtype)
        kk = cfg.k * cfg.k
        n = hw // kk
        p = cfg.d_part
        t = cfg.heads
        attn = 4.0 * t * n * kk * kk * p + 4.0 * t * n * p * p * kk
        params = sum(int(np.prod(s)) for s, _ in csa_param_specs(cfg).values())
        return (lambda: csa_module(x, None, cfg, weights)), attn, params
    raise ValueError(f"unknown bench variant {variant!r}")


def cmd_bench(args) -> int:
    dtype = np.float64 if args.f64 else np.float32
    sizes = _parse_sizes(args.sizes)
    variants = args.variants.split(",") if args.variants else list(BENCH_VARIANTS)
    rows = []
    flops_by_variant: dict = {}
    for v in variants:
        v = v.strip()
        for (h, w) in sizes:
            try:
                runner, attn_flops, params = _bench_layer(v, h, w, args.dim, args.seed, dtype)
            except (ShapeError, ValueError) as exc:
                print(f"bench row {v}@{h}x{w} skipped: {exc}", file=sys.stderr)
                continue
            runner()  # warm-up
            times = []
            for _ in range(args.trials):
                t0 = time.perf_counter()
                runner()
                times.append((time.perf_counter() - t0) * 1e3)
            wall = sorted(times)[len(times) // 2]
            rows.append((v, h, w, f"{attn_flops:.0f}", params, f"{wall:.3f}"))
            flops_by_variant.setdefault(v, []).append((h * w, attn_flops))
    print(_table(("variant", "h", "w", "flops", "params", "wall_ms"), rows))
    for v, pts in flops_by_variant.items():
        if len(pts) >= 2:
            pts.sort()
            (a_hw, a_fl), (b_hw, b_fl) = pts[0], pts[-1]
            growth = (b_fl / a_fl) / (b_hw / a_hw)
            label = "linear" if growth <= 1.25 else "super-linear"
            print(f"# {v}: flops grow {b_fl / a_fl:.2f}x for {b_hw / a_hw:.0f}x pixels -> {label}")
    if args.out:
        _write_csv(args.out, ("variant", "h", "w", "flops", "params", "wall_ms"), rows)
    return EXIT_OK


def cmd_kernbench(args) -> int:
    """Compare the compiled and pure-NumPy kernel backends."""
    impls = backend.available_backends()
    dtype = np.float64 if args.f64 else np.float32
    rng_seed = args.seed
    shapes = {
        "matmul(64x4096x32,32x64)": lambda impl: backend.matmul(
            tensor.tensor_from_seed(rng_seed, (64, 64, 32), "gaussian", dtype).reshape(1, -1, 32),
            tensor.tensor_from_seed(rng_seed + 1, (1, 32, 64), "gaussian", dtype), impl=impl),
        "conv3x3(128x128x32->32)": lambda impl: backend.conv2d(
            tensor.tensor_from_seed(rng_seed, (128, 128, 32), "gaussian", dtype),
            tensor.tensor_from_seed(rng_seed + 1, (3, 3, 32, 32), "gaussian", dtype), impl=impl),
        "dwconv3x3(128x128x64)": lambda impl: backend.conv2d(
            tensor.tensor_from_seed(rng_seed, (128, 128, 64), "gaussian", dtype),
            tensor.tensor_from_seed(rng_seed + 1, (3, 3, 1, 64), "gaussian", dtype), impl=impl),
    }
    rows = []
    for kname, fn in shapes.items():
        ref = None
        for bname, impl in impls.items():
            fn(impl)
            times = []
            for _ in range(args.trials):
                t0 = time.perf_counter()
                out = fn(impl)
                times.append((time.perf_counter() - t0) * 1e3)
            if ref is None:
                ref = out
                match = "ref"
            else:
                match = "bit-equal" if np.array_equal(ref, out) else "DIFFERS"
            rows.append((kname, bname, f"{sorted(times)[len(times) // 2]:.2f}", match))
    print(_table(("kernel", "backend", "wall_ms", "vs_first"), rows))
    if args.out:
        _write_csv(args.out, ("kernel", "backend", "wall_ms", "vs_first"), rows)
    return EXIT_OK


# ---------------------------------------------------------------------------
# golden


def cmd_golden(args) -> int:
    if args.action == "gen":
        written = golden_generate(args.suite, seed=args.seed, cases=args.cases or None)
        for cid in written:
            print(f"wrote {cid}")
        return EXIT_OK
    try:
        results = golden_check(args.suite)
    except FileNotFoundError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_IO
    bad = 0
    for cid, ok, msg in results:
        print(f"{'PASS' if ok else 'FAIL'} {cid}" + (f": {msg}" if msg else ""))
        bad += not ok
    if not results:
        print("no cases found", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK if bad == 0 else EXIT_FAIL


# ---------------------------------------------------------------------------
# permtest


def _seeded_permutation(seed: int, n: int) -> np.ndarray:
    return np.argsort(uniforms(seed, n), kind="stable")


def cmd_permtest(args) -> int:
    """Both halves of the position-sensitivity dichotomy, in float64."""
    h = w = 16
    d = 8
    x = tensor.tensor_from_seed(args.seed, (h * w, d), "gaussian", np.float64)
    zw = ZooWeights.from_seed(args.seed + 1, d, dtype=np.float64)
    base = transposed_attention_map(x, zw)
    worst_map = 0.0
    for trial in range(args.trials):
        perm = _seeded_permutation(args.seed + 100 + trial, h * w)
        mapped = transposed_attention_map(np.ascontiguousarray(x[perm]), zw)
        worst_map = max(worst_map, float(np.max(np.abs(mapped - base))))
    ok_map = worst_map <= 1e-6
    print(f"{'PASS' if ok_map else 'FAIL'} transposed-attention map invariance: "
          f"max |change| {worst_map:.3e} over {args.trials} permutations (tol 1e-6)")

    k = 8
    worst_sens = np.inf
    for trial in range(args.trials):
        xs = tensor.tensor_from_seed(args.seed + 500 + trial, (h, w, d), "gaussian", np.float64)
        zw_t = ZooWeights.from_seed(args.seed + 900 + trial, d, dtype=np.float64)
        out = csa_prototype(xs, k, np.sqrt(d), np.sqrt(d), zw_t)
        # swap two pixels inside the first block
        picks = np.argsort(uniforms(args.seed + 1300 + trial, k * k), kind="stable")[:2]
        (y1, x1), (y2, x2) = divmod(int(picks[0]), k), divmod(int(picks[1]), k)
        swapped = xs.copy()
        swapped[[y1, y2], [x1, x2]] = xs[[y2, y1], [x2, x1]]
        out_sw = csa_prototype(swapped, k, np.sqrt(d), np.sqrt(d), zw_t)
        mask = np.ones((h, w), dtype=bool)
        mask[y1, x1] = mask[y2, x2] = False
        delta = float(np.max(np.abs(out_sw - out)[mask]))
        worst_sens = min(worst_sens, delta)
    ok_sens = worst_sens >= 1e-3
    print(f"{'PASS' if ok_sens else 'FAIL'} concerto position sensitivity: "
          f"min |change| {worst_sens:.3e} over {args.trials} in-block swaps (tol 1e-3)")
    return EXIT_OK if (ok_map and ok_sens) else EXIT_FAIL


# ---------------------------------------------------------------------------
# infer


def cmd_infer(args) -> int:
    if not os.path.isfile(args.weights):
        print(f"weights file not found: {args.weights}", file=sys.stderr)
        return EXIT_IO
    try:
        store = WeightStore.load(args.weights)
    except (ValueError, OSError) as exc:
        print(f"cannot read weights: {exc}", file=sys.stderr)
        return EXIT_IO
    cfg = _load_cfg(args)
    try:
        img = read_png(args.input)
    except FileNotFoundError:
        print(f"input image not found: {args.input}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:
        print(f"cannot decode input PNG: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.f64:
        store = store.astype(np.float64)
        img = img.astype(np.float64)
    try:
        out = infer_tiled(store, cfg, img, tile=args.tile)
    except (ShapeError, ValueError, KeyError) as exc:
        print(f"inference failed: {exc}", file=sys.stderr)
        return EXIT_USAGE
    write_png(args.output, out)
    print(f"wrote {args.output}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# overfit


def cmd_overfit(args) -> int:
    cfg = _load_cfg(args) if (args.config or args.preset) else config_from_preset("tiny")
    try:
        trace = overfit(seed=args.seed, steps=args.steps, lr=args.lr, schedule=args.schedule,
                        optimizer=args.optimizer, cfg=cfg,
                        log=lambda s, v: print(f"step {s:4d}  loss {v:.6f}"))
    except FloatingPointError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_FAIL
    if args.out:
        _write_csv(args.out, ("step", "loss"), list(enumerate(trace)))
    if args.steps == 0:
        print("no steps taken; success criterion not evaluated")
        return EXIT_OK
    ratio = trace[-1] / trace[0]
    ok = ratio <= 0.5
    print(f"{'PASS' if ok else 'FAIL'} loss {trace[0]:.4f} -> {trace[-1]:.4f} "
          f"({(1 - ratio) * 100:.1f}% reduction; needs >= 50%)")
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="concertormer",
                                 description="Cost tables, scaling benchmarks, golden vectors, "
                                             "property demonstrations, PNG inference, and the "
                                             "single-pair overfit demo.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, preset_default=None):
        p.add_argument("--config", help="model config JSON path")
        p.add_argument("--preset", choices=sorted(PRESETS), default=preset_default)
        p.add_argument("--seed", type=int, default=2024)
        p.add_argument("--f64", action="store_true", help="run in float64")
        p.add_argument("--out", help="write results (CSV) to this path")

    p = sub.add_parser("cost", help="analytic FLOPs/parameter table")
    common(p, "lite")
    p.add_argument("--height", type=int, default=256)
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--variant", action="append", choices=COST_VARIANTS)
    p.set_defaults(fn=cmd_cost)

    p = sub.add_parser("bench", help="attention-layer scaling benchmark")
    common(p)
    p.add_argument("--sizes", default="64x64,128x128")
    p.add_argument("--variants", default=",".join(BENCH_VARIANTS))
    p.add_argument("--dim", type=int, default=32, help="layer width")
    p.add_argument("--trials", type=int, default=5)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("kernbench", help="compare compiled vs NumPy kernel backends")
    common(p)
    p.add_argument("--trials", type=int, default=5)
    p.set_defaults(fn=cmd_kernbench)

    p = sub.add_parser("golden", help="generate or check golden vectors")
    common(p)
    p.add_argument("action", choices=("gen", "check"))
    p.add_argument("--suite", required=True, help="suite directory")
    p.add_argument("--cases", nargs="*", choices=sorted(CASES))
    p.set_defaults(fn=cmd_golden)

    p = sub.add_parser("permtest", help="permutation dichotomy demonstration")
    common(p)
    p.add_argument("--trials", type=int, default=100)
    p.set_defaults(fn=cmd_permtest)

    p = sub.add_parser("infer", help="restore a PNG with tiled forward passes")
    common(p, "tiny")
    p.add_argument("--weights", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--tile", type=int, default=256)
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("overfit", help="single-pair training demo")
    common(p)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--schedule", choices=("fixed", "cosine"), default="fixed")
    p.add_argument("--optimizer", choices=("gd", "adamw"), default="gd")
    p.set_defaults(fn=cmd_overfit)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except FileNotFoundError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_IO
    except (ShapeError, ValueError) as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
