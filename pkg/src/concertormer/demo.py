"""Single-pair overfitting demo.

Target: a seeded uniform-noise image. Input: the same image after a 5x5 box
blur (symmetric borders). The tiny network is trained to undo the blur by
plain gradient descent on the multi-scale image+spectrum loss; AdamW is
available behind a flag. Everything is seeded, so traces reproduce exactly.
"""

from __future__ import annotations

import math

import numpy as np

from . import backend, tensor
from .autodiff import Tape, grad_backward, grad_of
from .model import build_model, forward_multiscale, leaf_params, loss_multiscale, make_pyramid
from .store import ModelConfig, config_from_preset


def box_blur5(img: np.ndarray) -> np.ndarray:
    pad = np.pad(img, ((2, 2), (2, 2), (0, 0)), mode="symmetric")
    kernel = np.full((5, 5, 1, img.shape[2]), 1.0 / 25.0, dtype=img.dtype)
    return backend.conv2d(pad, kernel, stride=1, pad="valid")


def synthetic_pair(seed: int, size: int = 64):
    """(blurred input, ground truth) pair of the given square size."""
    gt = tensor.tensor_from_seed(seed, (size, size, 3), "uniform")
    return box_blur5(gt), gt


def _lr_at(base: float, schedule: str, step: int, steps: int) -> float:
    if schedule == "fixed":
        return base
    if schedule == "cosine":
        return base * 0.5 * (1.0 + math.cos(math.pi * step / max(1, steps)))
    raise ValueError(f"unknown schedule {schedule!r}")


class _AdamW:
    """AdamW with beta1 = beta2 = 0.9 and decoupled weight decay."""

    def __init__(self, names, beta1=0.9, beta2=0.9, eps=1e-8, weight_decay=1e-3):
        self.m = {n: None for n in names}
        self.v = {n: None for n in names}
        self.beta1, self.beta2, self.eps, self.wd = beta1, beta2, eps, weight_decay
        self.t = 0

    def step(self, store, grads, lr):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, g in grads.items():
            if self.m[name] is None:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            mhat = self.m[name] / (1 - b1 ** self.t)
            vhat = self.v[name] / (1 - b2 ** self.t)
            update = mhat / (np.sqrt(vhat) + self.eps) + self.wd * store[name]
            store[name] = store[name] - lr * update.astype(store[name].dtype)


def overfit(seed: int = 7, steps: int = 200, lr: float = 1e-3, schedule: str = "fixed",
            optimizer: str = "gd", lam: float = 0.1, cfg: ModelConfig | None = None,
            size: int = 64, log=None) -> list:
    """Train on the synthetic pair; returns the loss trace (length steps+1).

    Raises FloatingPointError naming the step if the loss goes non-finite.
    """
    cfg = cfg or config_from_preset("tiny")
    store = build_model(cfg, seed)
    blurred, gt = synthetic_pair(seed + 1, size)
    targets = [np.asarray(t) for t in make_pyramid(gt)]
    adam = _AdamW(store.names()) if optimizer == "adamw" else None
    if optimizer not in ("gd", "adamw"):
        raise ValueError(f"unknown optimizer {optimizer!r}")

    trace = []
    for step in range(steps + 1):
        tape = Tape()
        params = leaf_params(tape, store)
        outs = forward_multiscale(store, cfg, blurred, params=params)
        loss = loss_multiscale(outs, targets, lam=lam)
        value = float(loss.value)
        trace.append(value)
        if not math.isfinite(value):
            raise FloatingPointError(f"loss diverged (non-finite) at step {step}")
        if log:
            log(step, value)
        if step == steps:
            break
        grad_backward(tape, loss)
        rate = _lr_at(lr, schedule, step, steps)
        if adam is not None:
            grads = {name: grad_of(node) for name, node in params.items()}
            adam.step(store, grads, rate)
        else:
            for name, node in params.items():
                if node.grad is not None:
                    store[name] = store[name] - rate * node.grad.astype(store[name].dtype)
    return trace
