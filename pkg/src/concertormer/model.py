"""The multi-scale restoration U-Net.

Seven stages (three encoder levels, a latent stage, three decoder levels);
resolution halves and channels double on the way down (2x2 stride-2 convs),
the reverse on the way up (1x1 conv + pixel shuffle). The input image and its
three half-resolution copies enter through 3x3 convs at 1x/2x/3x/4x the base
width; cross-attention feeds the extra scales into the first block of each
encoder level below the top, and replaces the usual skip concatenation in the
decoders. Each stage's features also emit a restored image at its scale
through a 3x3 conv plus a skip to that scale's input.

Training loss: mean absolute error per scale in the image domain plus a
weighted mean absolute error between direct 2-D DFTs of output and target.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import prng, tensor
from .autodiff import Tape, add, conv2d, mul, value_of
from .backend import ShapeError
from .block import block_param_specs, run_block
from .concerto import CsaConfig
from .ops import bilinear_downsample_half, dft2, l1_mean, pixel_shuffle
from .store import ModelConfig, WeightStore

LEVEL_NAMES = ("enc1", "enc2", "enc3", "latent", "dec3", "dec2", "dec1")
ATTENTION_VARIANTS = ("full", "no_cdc", "plain_csa")

# mode / pooled-gate settings per attention variant
_VARIANT_CSA = {
    "full": ("cdc", True),
    "no_cdc": ("split", True),
    "plain_csa": ("split", False),
}


def level_csa_config(cfg: ModelConfig, level: int) -> CsaConfig | None:
    if cfg.variant not in ATTENTION_VARIANTS:
        return None
    mode, gate = _VARIANT_CSA[cfg.variant]
    return CsaConfig(d_model=cfg.level_widths[level], heads=cfg.level_heads[level],
                     k=cfg.k, mode=mode, sca_gate=gate)


def _xa_source_width(cfg: ModelConfig, level: int) -> int | None:
    """Channel width of the cross-attention source for the first block of
    each stage below the top encoder; None when the stage has no XA."""
    if cfg.variant not in ATTENTION_VARIANTS or level == 0:
        return None
    w = cfg.width
    return {1: 2 * w, 2: 3 * w, 3: 4 * w, 4: 4 * w, 5: 2 * w, 6: w}[level]


def model_param_specs(cfg: ModelConfig) -> dict:
    """Ordered name -> (shape, init) map for the whole network."""
    w = cfg.width
    specs: dict = {}
    for i, mult in enumerate((1, 2, 3, 4)):
        specs[f"in{i}.w"] = ((3, 3, 3, mult * w), ("gauss_fanin",))
        specs[f"in{i}.b"] = ((mult * w,), ("zeros",))
    for level, name in enumerate(LEVEL_NAMES):
        csa = level_csa_config(cfg, level)
        xa_w = _xa_source_width(cfg, level)
        for j in range(cfg.blocks[level]):
            src = xa_w if j == 0 else None
            bcfg = csa if csa is not None else CsaConfig(d_model=cfg.level_widths[level], k=cfg.k)
            for pname, spec in block_param_specs(bcfg, cfg.variant, src, cfg.expansion).items():
                specs[f"{name}.blk{j}.{pname}"] = spec
    for i, (cin, cout) in enumerate(((w, 2 * w), (2 * w, 4 * w), (4 * w, 8 * w)), start=1):
        specs[f"down{i}.w"] = ((2, 2, cin, cout), ("gauss_fanin",))
        specs[f"down{i}.b"] = ((cout,), ("zeros",))
    for i, cin in ((3, 8 * w), (2, 4 * w), (1, 2 * w)):
        specs[f"up{i}.w"] = ((1, 1, cin, 2 * cin), ("gauss_fanin",))
        specs[f"up{i}.b"] = ((2 * cin,), ("zeros",))
    for i, cin in enumerate((w, 2 * w, 4 * w, 8 * w)):
        specs[f"out{i}.w"] = ((3, 3, cin, 3), ("gauss_fanin",))
        specs[f"out{i}.b"] = ((3,), ("zeros",))
    return specs


def _init_array(name: str, shape, init, seed: int, dtype) -> np.ndarray:
    kind = init[0]
    if kind == "zeros":
        return np.zeros(shape, dtype)
    if kind == "ones":
        return np.ones(shape, dtype)
    if kind == "const":
        return np.full(shape, init[1], dtype)
    if kind == "eye":
        return np.eye(shape[0], dtype=dtype)
    if kind == "delta_dw":
        arr = np.zeros(shape, dtype)
        arr[shape[0] // 2, shape[1] // 2, 0, :] = 1
        return arr
    if kind == "gauss":
        g = tensor.tensor_from_seed(prng.derive_seed(seed, name), shape, "gaussian", dtype)
        return g * dtype(init[1]) if len(init) > 1 else g
    if kind == "gauss_fanin":
        g = tensor.tensor_from_seed(prng.derive_seed(seed, name), shape, "gaussian", dtype)
        fan_in = int(np.prod(shape[:-1])) if len(shape) == 4 else int(shape[0])
        return g * dtype(1.0 / np.sqrt(fan_in))
    raise ValueError(f"unknown init kind {kind!r} for {name}")


def init_params(specs: dict, seed: int, dtype=np.float32) -> dict:
    """Materialize a name -> (shape, init) spec map into arrays."""
    dtype = np.dtype(dtype).type
    return {name: _init_array(name, shape, init, seed, dtype)
            for name, (shape, init) in specs.items()}


def build_model(cfg: ModelConfig, seed: int, dtype=np.float32) -> WeightStore:
    """Deterministic parameter store; same (config, seed) gives identical bytes."""
    store = WeightStore()
    for name, arr in init_params(model_param_specs(cfg), seed, dtype).items():
        store[name] = arr
    return store


def zero_final_projections(store) -> None:
    """Zero every block's closing projection and all output-head convs, making
    the whole network the identity map on each scale."""
    for name in store.names() if hasattr(store, "names") else list(store):
        if name.endswith("gd.g.w") or name.endswith("gd.g.b") \
                or name.endswith("fc2.w") or name.endswith("fc2.b") \
                or name.startswith("out"):
            store[name] = np.zeros_like(store[name])


@dataclass
class MultiScaleOutput:
    """Restored images at full, 1/2, 1/4 and 1/8 resolution."""

    o0: object
    o1: object
    o2: object
    o3: object

    def as_list(self):
        return [self.o0, self.o1, self.o2, self.o3]

    def values(self):
        return [value_of(o) for o in self.as_list()]


def make_pyramid(image, levels: int = 4):
    """Input image plus repeated half-resolution downsamples."""
    pyr = [image]
    for _ in range(levels - 1):
        pyr.append(bilinear_downsample_half(pyr[-1]))
    return pyr


def forward_multiscale(store, cfg: ModelConfig, image, params=None) -> MultiScaleOutput:
    """Run the network on an h x w x 3 image; h and w must be multiples of 64.

    `params` may map names to tape nodes to make the pass differentiable;
    otherwise weights come straight from the store.
    """
    img = value_of(image)
    h, w, c = img.shape
    if c != 3:
        raise ShapeError(f"expected RGB input, got {img.shape}")
    if h < 64 or w < 64 or h % 64 or w % 64:
        raise ShapeError(f"input extents must be multiples of 64 and >= 64, got {h}x{w}")
    p = params if params is not None else store

    def P(name):
        return p[name]

    att = cfg.variant in ATTENTION_VARIANTS
    pyr = make_pyramid(image if params is not None else img)
    embeds = [conv2d(pyr[i], P(f"in{i}.w"), P(f"in{i}.b")) for i in range(4)]

    def stage(level, x, y):
        name = LEVEL_NAMES[level]
        csa = level_csa_config(cfg, level)
        bcfg = csa if csa is not None else CsaConfig(d_model=cfg.level_widths[level], k=cfg.k)
        for j in range(cfg.blocks[level]):
            src = y if (att and j == 0) else None
            x = run_block(x, src, bcfg, cfg.variant, p, f"{name}.blk{j}.")
        return x

    x = stage(0, embeds[0], None)
    skips = [x]
    for level in (1, 2):
        x = conv2d(x, P(f"down{level}.w"), P(f"down{level}.b"), stride=2, pad="valid")
        x = stage(level, x, embeds[level])
        skips.append(x)
    x = conv2d(x, P("down3.w"), P("down3.b"), stride=2, pad="valid")
    x = stage(3, x, embeds[3])
    o3 = add(conv2d(x, P("out3.w"), P("out3.b")), pyr[3])
    outs = [o3]
    for level, up, skip in ((4, 3, skips[2]), (5, 2, skips[1]), (6, 1, skips[0])):
        x = pixel_shuffle(conv2d(x, P(f"up{up}.w"), P(f"up{up}.b")), 2)
        if not att:
            x = add(x, skip)  # no cross-attention path to carry the skip
        x = stage(level, x, skip)
        scale = 6 - level
        outs.append(add(conv2d(x, P(f"out{scale}.w"), P(f"out{scale}.b")), pyr[scale]))
    o3, o2, o1, o0 = outs
    return MultiScaleOutput(o0, o1, o2, o3)


def loss_multiscale(outs: MultiScaleOutput, targets, lam: float = 0.1):
    """Sum over scales of mean |error| plus lam * mean |DFT error| (real and
    imaginary parts). Zero iff every scale matches its target exactly."""
    if len(targets) != 4:
        raise ShapeError(f"expected a 4-level target pyramid, got {len(targets)} levels")
    total = None
    for o, g in zip(outs.as_list(), targets):
        if value_of(o).shape != value_of(g).shape:
            raise ShapeError(
                f"output/target shape mismatch: {value_of(o).shape} vs {value_of(g).shape}")
        term = l1_mean(o, g)
        if lam:
            o_re, o_im = dft2(o)
            g_re, g_im = dft2(g)
            freq = add(l1_mean(o_re, g_re), l1_mean(o_im, g_im))
            term = add(term, mul(freq, np.asarray(lam, dtype=value_of(term).dtype)))
        total = term if total is None else add(total, term)
    return total


def leaf_params(tape: Tape, store) -> dict:
    """Wrap every store tensor as a tape leaf (for training/gradient passes)."""
    return {name: tape.leaf(arr, name=name) for name, arr in store.items()}
