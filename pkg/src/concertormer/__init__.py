"""Concerto self-attention, the fused gated-dconv block, the multi-scale
restoration U-Net built from them, and analysis tooling (cost model, golden
vectors, benchmarks, training demo)."""

from .backend import KERNEL_BACKEND
from .concerto import CsaConfig
from .store import ModelConfig, WeightStore, config_from_preset

__all__ = ["KERNEL_BACKEND", "CsaConfig", "ModelConfig", "WeightStore", "config_from_preset"]
__version__ = "0.1.0"
