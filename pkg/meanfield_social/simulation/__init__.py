"""N-agent particle simulation with common noise."""

from .noise import NoiseBundle
from .problems import ClosedLoopProblem, LqProblem
from .simulator import (
    CostReport,
    Deviation,
    PairedReport,
    SimConfig,
    mean_and_stderr,
    moment_audit,
    paired_simulate,
    simulate,
)

__all__ = [
    "NoiseBundle",
    "ClosedLoopProblem",
    "LqProblem",
    "SimConfig",
    "Deviation",
    "CostReport",
    "PairedReport",
    "simulate",
    "paired_simulate",
    "moment_audit",
    "mean_and_stderr",
]
