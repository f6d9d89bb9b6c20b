"""Desk-scale neural transducer with pluggable joint-network fusion."""

from . import autodiff, data, decoding, fusion, layers, regularizer, trainer, transducer
from .fusion import FUSION_KINDS, FusionSpec, param_count
from .model import ModelConfig, TransducerModel
from .regularizer import Schedule, alpha_at
from .trainer import TrainConfig, train

__all__ = [
    "autodiff",
    "data",
    "decoding",
    "fusion",
    "layers",
    "regularizer",
    "trainer",
    "transducer",
    "FUSION_KINDS",
    "FusionSpec",
    "param_count",
    "ModelConfig",
    "TransducerModel",
    "Schedule",
    "alpha_at",
    "TrainConfig",
    "train",
]
