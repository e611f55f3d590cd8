"""Model configuration, the named weight store, and their file formats.

Weight file layout:
    magic "CCRT" | u32 version | u64 tensor count |
    per tensor: u16 name length | UTF-8 name | tensor block (see tensor.py)

Config files are plain JSON with keys width, blocks[7], k, expansion,
heads[4], preset, and optionally variant.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from . import tensor

STORE_MAGIC = b"CCRT"
STORE_VERSION = 1

PRESETS = {
    "lite": {"width": 48, "blocks": (4, 4, 12, 2, 12, 4, 4)},
    "full": {"width": 48, "blocks": (6, 8, 24, 2, 24, 8, 8)},
    "tiny": {"width": 16, "blocks": (1, 1, 1, 1, 1, 1, 1)},
}

# block internals per variant; "full" is the complete fused block
VARIANTS = ("full", "no_cdc", "plain_csa", "gdmlp", "ffn")


@dataclass(frozen=True)
class ModelConfig:
    width: int = 48
    blocks: tuple = (4, 4, 12, 2, 12, 4, 4)
    k: int = 8
    expansion: int = 2
    heads: tuple = (1, 2, 4, 8)
    variant: str = "full"
    preset: str = ""

    def __post_init__(self):
        if len(self.blocks) != 7:
            raise ValueError(f"blocks must list 7 stage depths, got {self.blocks}")
        if len(self.heads) != 4:
            raise ValueError(f"heads must list 4 level head counts, got {self.heads}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")

    @property
    def level_widths(self) -> tuple:
        w = self.width
        return (w, 2 * w, 4 * w, 8 * w, 4 * w, 2 * w, w)

    @property
    def level_heads(self) -> tuple:
        h = self.heads
        return (h[0], h[1], h[2], h[3], h[2], h[1], h[0])


def config_from_preset(preset: str, variant: str = "full") -> ModelConfig:
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
    p = PRESETS[preset]
    return ModelConfig(width=p["width"], blocks=p["blocks"], variant=variant, preset=preset)


def config_to_json(cfg: ModelConfig) -> str:
    return json.dumps({
        "preset": cfg.preset,
        "width": cfg.width,
        "blocks": list(cfg.blocks),
        "k": cfg.k,
        "expansion": cfg.expansion,
        "heads": list(cfg.heads),
        "variant": cfg.variant,
    }, indent=2)


def config_from_json(text: str) -> ModelConfig:
    raw = json.loads(text)
    preset = raw.get("preset", "")
    base = PRESETS.get(preset, {})
    return ModelConfig(
        width=int(raw.get("width", base.get("width", 48))),
        blocks=tuple(raw.get("blocks", base.get("blocks", PRESETS["lite"]["blocks"]))),
        k=int(raw.get("k", 8)),
        expansion=int(raw.get("expansion", 2)),
        heads=tuple(raw.get("heads", (1, 2, 4, 8))),
        variant=raw.get("variant", "full"),
        preset=preset,
    )


def load_config(path) -> ModelConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_json(fh.read())


class WeightStore:
    """Ordered name -> array map. The name set is a pure function of the
    model config; serialization round-trips bit-exactly (float32 storage)."""

    def __init__(self):
        self._data: dict[str, np.ndarray] = {}

    def __setitem__(self, name: str, value: np.ndarray):
        self._data[name] = value

    def __getitem__(self, name: str) -> np.ndarray:
        return self._data[name]

    def __contains__(self, name: str) -> bool:
        return name in self._data

    def __len__(self) -> int:
        return len(self._data)

    def __iter__(self):
        return iter(self._data)

    def items(self):
        return self._data.items()

    def names(self):
        return list(self._data)

    def param_count(self) -> int:
        return sum(int(v.size) for v in self._data.values())

    def astype(self, dtype) -> "WeightStore":
        out = WeightStore()
        for k, v in self._data.items():
            out[k] = v.astype(dtype)
        return out

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(STORE_MAGIC)
            fh.write(struct.pack("<I", STORE_VERSION))
            fh.write(struct.pack("<Q", len(self._data)))
            for name, arr in self._data.items():
                raw = name.encode("utf-8")
                fh.write(struct.pack("<H", len(raw)))
                fh.write(raw)
                tensor.write_tensor(fh, arr)

    @classmethod
    def load(cls, path) -> "WeightStore":
        store = cls()
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != STORE_MAGIC:
                raise ValueError(f"bad weight-store magic {magic!r}")
            (version,) = struct.unpack("<I", fh.read(4))
            if version != STORE_VERSION:
                raise ValueError(f"unsupported weight-store version {version}")
            (count,) = struct.unpack("<Q", fh.read(8))
            for _ in range(count):
                (nlen,) = struct.unpack("<H", fh.read(2))
                name = fh.read(nlen).decode("utf-8")
                store[name] = tensor.read_tensor(fh)
        return store
