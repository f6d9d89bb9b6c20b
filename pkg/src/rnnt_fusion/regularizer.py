"""Scheduled damping of gradients into the prediction network.

Text priors are learned faster than acoustic patterns, which lets the
prediction network dominate the fused representation early in training.
The remedy: leave the text representation's value untouched but scale the
gradient flowing back into the prediction network by a factor alpha that
ramps from 0 to 1 on a piece-wise linear schedule over training steps.
Because the forward value is bit-identical, the loss itself never changes.

Pure functions; safe from any thread.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import autodiff as ad
from .errors import ConfigError


@dataclass(frozen=True)
class Schedule:
    """Ramp start and end step indices. Gradients are fully blocked before
    m1, fully open from m2 on."""

    m1: int
    m2: int

    def __post_init__(self):
        if self.m1 < 0:
            raise ConfigError(f"schedule: m1 must be >= 0, got {self.m1}")
        if not self.m1 < self.m2:
            raise ConfigError(f"schedule: need m1 < m2, got {self.m1} >= {self.m2}")


def alpha_at(m: int, schedule: Schedule) -> float:
    """Gradient scale at step m: 0 before m1, 1 from m2, linear between."""
    if m < 0:
        raise ConfigError(f"alpha_at: step must be >= 0, got {m}")
    if m < schedule.m1:
        return 0.0
    if m >= schedule.m2:
        return 1.0
    return (m - schedule.m1) / (schedule.m2 - schedule.m1)


def apply(h_pred: ad.Node, m: int, schedule: Schedule) -> ad.Node:
    """Wrap the text representation; forward value is bit-identical."""
    return ad.scale_gradient(h_pred, alpha_at(m, schedule))
