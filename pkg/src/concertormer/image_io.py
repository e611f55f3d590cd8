"""PNG ingestion and tiled whole-image inference.

Images are 8-bit RGB; pixels map to float32 in [0, 1]. Inference pads the
image symmetrically to a multiple of the tile size, restores each tile
independently, stitches, and crops — deterministic for fixed weights+input.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

from .backend import ShapeError
from .model import forward_multiscale


def read_png(path) -> np.ndarray:
    img = Image.open(path)
    if img.mode != "RGB":
        img = img.convert("RGB")
    arr = np.asarray(img, dtype=np.uint8)
    return (arr.astype(np.float32) / 255.0).copy()


def write_png(path, arr: np.ndarray) -> None:
    data = np.clip(np.asarray(arr), 0.0, 1.0)
    img = Image.fromarray((data * 255.0 + 0.5).astype(np.uint8), mode="RGB")
    img.save(path, format="PNG")


def pad_to_multiple(img: np.ndarray, multiple: int) -> np.ndarray:
    h, w = img.shape[:2]
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph == 0 and pw == 0:
        return img
    if ph > h or pw > w:
        raise ShapeError(f"image {h}x{w} too small to pad to a multiple of {multiple}")
    return np.pad(img, ((0, ph), (0, pw), (0, 0)), mode="symmetric")


def infer_tiled(store, cfg, img: np.ndarray, tile: int = 256) -> np.ndarray:
    """Restore an h x w x 3 image with independent tile-sized forward passes."""
    if tile < 64 or tile % 64:
        raise ValueError(f"tile must be a positive multiple of 64, got {tile}")
    h, w = img.shape[:2]
    padded = pad_to_multiple(img, tile)
    ph, pw = padded.shape[:2]
    out = np.empty_like(padded)
    for y in range(0, ph, tile):
        for x in range(0, pw, tile):
            patch = np.ascontiguousarray(padded[y:y + tile, x:x + tile])
            restored = forward_multiscale(store, cfg, patch)
            out[y:y + tile, x:x + tile] = restored.values()[0]
    return np.ascontiguousarray(out[:h, :w])
