"""Deterministic fixed-step ODE integration."""

from .engine import (
    Block,
    BlockLayout,
    HermiteInterpolant,
    TimeGrid,
    Trajectory,
    integrate_forward,
    integrate_terminal,
    sample,
)

__all__ = [
    "Block",
    "BlockLayout",
    "HermiteInterpolant",
    "TimeGrid",
    "Trajectory",
    "integrate_forward",
    "integrate_terminal",
    "sample",
]
