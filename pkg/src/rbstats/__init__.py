"""Offset-free two-length estimation, design and validation for randomized benchmarking."""

__version__ = "0.1.0"

from .model import DecayParams, UnitarityParams, eval_decay, eval_difference, povm_offset
from .estimate import Estimate, TwoPointSummary, ratio_estimate, lognormal_interval
from .sampler import RBDataset, DesignRow, generate

__all__ = [
    "DecayParams",
    "UnitarityParams",
    "eval_decay",
    "eval_difference",
    "povm_offset",
    "Estimate",
    "TwoPointSummary",
    "ratio_estimate",
    "lognormal_interval",
    "RBDataset",
    "DesignRow",
    "generate",
]
