"""
Person-by-person optimality experiments.

A gap is Δ = J_soc(deviation) − J_soc(φ) measured on common random numbers, so
the optimality statement reads "Δ ≥ −ε_N for every deviation".
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from .core.constants import (
    DEFAULT_CONSTANT_CONTROL,
    DEFAULT_SCALES,
    MIN_SCALING_POINTS,
    SIGNIFICANCE_MULTIPLIER,
)
from .core.exceptions import ConfigError, InsufficientSignalError
from .lq.fields import EmpiricalMeasure, benchmark_value
from .lq.model import LqModel, sample_initial_states
from .lq.synthesis import UCoefficients, VCoefficients
from .ode import TimeGrid
from .simulation import (
    ClosedLoopProblem,
    Deviation,
    LqProblem,
    NoiseBundle,
    SimConfig,
    mean_and_stderr,
    simulate,
)
from .systemic_risk import SrMasterSolution, SrParams, SystemicRiskProblem, direct_deviation, solve_direct

logger = logging.getLogger(__name__)

ProblemFactory = Callable[[int], Tuple[ClosedLoopProblem, List[Deviation]]]


def default_menu(n1: int) -> List[Deviation]:
    """zero-control, scaled(0.5), scaled(1.5), constant(0.1·1)."""
    menu = [Deviation.zero_control()]
    menu.extend(Deviation.scaled(k) for k in DEFAULT_SCALES)
    menu.append(Deviation.constant_control(np.full(n1, DEFAULT_CONSTANT_CONTROL)))
    return menu


@dataclass
class GapEntry:
    deviation: str
    mean: float
    stderr: float
    control_energy: float
    admissible: bool = True

    def to_dict(self) -> Dict[str, Any]:
        return {
            "deviation": self.deviation,
            "mean": self.mean,
            "stderr": self.stderr,
            "control_energy": self.control_energy,
            "admissible": self.admissible,
        }


@dataclass
class GapReport:
    """Gaps of every menu entry against the cooperative baseline."""

    N: int
    paths: int
    seed: int
    baseline_mean: float
    baseline_stderr: float
    gaps: List[GapEntry]
    K0: Optional[float] = None

    @property
    def min_entry(self) -> GapEntry:
        return min(self.gaps, key=lambda g: g.mean)

    @property
    def min_gap(self) -> float:
        return self.min_entry.mean

    @property
    def eps_hat(self) -> float:
        """max(0, −min Δ)."""
        return max(0.0, -self.min_gap)

    @property
    def eps_hat_stderr(self) -> float:
        return self.min_entry.stderr

    @property
    def significant(self) -> bool:
        return self.eps_hat > SIGNIFICANCE_MULTIPLIER * self.eps_hat_stderr

    def to_dict(self) -> Dict[str, Any]:
        return {
            "experiment": "pbp-gap",
            "seed": self.seed,
            "N": self.N,
            "paths": self.paths,
            "K0": self.K0,
            "baseline": {"mean": self.baseline_mean, "stderr": self.baseline_stderr},
            "gaps": [g.to_dict() for g in self.gaps],
            "min_gap": self.min_gap,
            "eps_hat": self.eps_hat,
            "eps_hat_stderr": self.eps_hat_stderr,
        }


def run_gap(
    problem: ClosedLoopProblem,
    cfg: SimConfig,
    menu: Sequence[Deviation],
    K0: Optional[float] = None,
) -> GapReport:
    """Paired gap of each menu deviation; one shared baseline ensemble.

    Args:
        problem: Closed loop where every agent plays φ
        cfg: Simulation settings (the seed fixes the common random numbers)
        menu: Deviations for agent index 0
        K0: Optional energy budget; entries with mean ∫|u|²dt above it are flagged
    """
    if not menu:
        raise ConfigError("deviation menu must not be empty")
    baseline = simulate(problem, cfg, Deviation.none())
    gaps = []
    for dev in menu:
        deviated = simulate(problem, cfg, dev)
        mean, stderr = mean_and_stderr(deviated.per_path - baseline.per_path)
        energy = float(np.mean(deviated.control_energy))
        gaps.append(
            GapEntry(
                deviation=dev.describe(),
                mean=mean,
                stderr=stderr,
                control_energy=energy,
                admissible=K0 is None or energy <= K0,
            )
        )
        logger.debug(f"N={cfg.N} {dev.describe()}: Δ={mean:.6g} ± {stderr:.3g}")
    report = GapReport(cfg.N, cfg.paths, cfg.seed, baseline.mean, baseline.stderr, gaps, K0)
    logger.info(f"Gap experiment N={cfg.N}: eps_hat={report.eps_hat:.4g} ± {report.eps_hat_stderr:.3g}")
    return report


@dataclass
class ScalingReport:
    """ε̂_N across N with a log–log least-squares fit."""

    N_list: List[int]
    eps_hat: List[float]
    stderr: List[float]
    gap_reports: List[GapReport] = field(repr=False)
    slope: Optional[float] = None
    intercept: Optional[float] = None
    slope_stderr: Optional[float] = None
    slope_ci: Optional[Tuple[float, float]] = None
    fitted_N: List[int] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"N": self.N_list, "eps_hat": self.eps_hat, "stderr": self.stderr})

    def to_dict(self) -> Dict[str, Any]:
        first = self.gap_reports[0] if self.gap_reports else None
        return {
            "experiment": "pbp-scaling",
            "seed": first.seed if first else None,
            "N": list(self.N_list),
            "paths": first.paths if first else None,
            "eps_hat": list(self.eps_hat),
            "stderr": list(self.stderr),
            "fitted_N": list(self.fitted_N),
            "slope": self.slope,
            "intercept": self.intercept,
            "slope_stderr": self.slope_stderr,
            "slope_ci": list(self.slope_ci) if self.slope_ci else None,
            "gaps": [r.to_dict() for r in self.gap_reports],
        }


def _check_N_list(N_list: Sequence[int], minimum: int) -> List[int]:
    N_list = [int(N) for N in N_list]
    if len(N_list) < minimum:
        raise ConfigError(f"need at least {minimum} values of N, got {len(N_list)}")
    if any(b <= a for a, b in zip(N_list, N_list[1:])):
        raise ConfigError("N list must be strictly increasing")
    return N_list


def run_scaling(factory: ProblemFactory, cfg_template: SimConfig, N_list: Sequence[int]) -> ScalingReport:
    """Fit log ε̂_N = α log N + β over the N with a positive gap estimate.

    Raises:
        InsufficientSignalError: If no ε̂_N clears 2·stderr or fewer than two are
            positive; the partial report rides on the exception
    """
    N_list = _check_N_list(N_list, MIN_SCALING_POINTS)
    reports = []
    for N in N_list:
        problem, menu = factory(N)
        reports.append(run_gap(problem, cfg_template.with_changes(N=N), menu))
    report = ScalingReport(
        N_list=N_list,
        eps_hat=[r.eps_hat for r in reports],
        stderr=[r.eps_hat_stderr for r in reports],
        gap_reports=reports,
    )

    positive = [(N, e) for N, e in zip(N_list, report.eps_hat) if e > 0.0]
    if not any(r.significant for r in reports) or len(positive) < 2:
        logger.warning("Every gap is within Monte Carlo resolution; no slope fitted")
        raise InsufficientSignalError("gap below Monte Carlo resolution for every N", report)

    Ns, eps = zip(*positive)
    fit = stats.linregress(np.log(Ns), np.log(eps))
    report.fitted_N = list(Ns)
    report.slope = float(fit.slope)
    report.intercept = float(fit.intercept)
    report.slope_stderr = float(fit.stderr)
    if len(Ns) > 2:
        half = float(stats.t.ppf(0.975, len(Ns) - 2) * fit.stderr)
        report.slope_ci = (report.slope - half, report.slope + half)
    logger.info(f"Scaling slope {report.slope:.3f} over N={list(Ns)}")
    return report


def lq_factory(model: LqModel, v: VCoefficients, menu: Optional[Sequence[Deviation]] = None) -> ProblemFactory:
    """The same LQ closed loop and menu for every N."""
    problem = LqProblem(model, v)
    chosen = list(menu) if menu is not None else default_menu(model.n1)
    return lambda N: (problem, chosen)


def systemic_risk_factory(
    params: SrParams,
    master: SrMasterSolution,
    grid: TimeGrid,
    include_default: bool = True,
) -> ProblemFactory:
    """Limit-law closed loop plus the exact finite-N optimal deviation."""
    problem = SystemicRiskProblem.limit(params, master)

    def factory(N: int) -> Tuple[ClosedLoopProblem, List[Deviation]]:
        menu = default_menu(1) if include_default else []
        menu.append(direct_deviation(solve_direct(params, N, grid)))
        return problem, menu

    return factory


@dataclass
class BenchmarkEntry:
    N: int
    discrepancy: float
    stderr: float
    social_cost: float
    benchmark: float

    @property
    def scaled(self) -> float:
        return self.discrepancy * self.N

    def to_dict(self) -> Dict[str, Any]:
        return {
            "N": self.N,
            "discrepancy": self.discrepancy,
            "stderr": self.stderr,
            "discrepancy_times_N": self.scaled,
            "social_cost": self.social_cost,
            "benchmark": self.benchmark,
        }


@dataclass
class BenchmarkReport:
    """Monte Carlo J_soc under φ against U + (N−1)Ū at t = 0."""

    entries: List[BenchmarkEntry]
    seed: int
    paths: int
    kendall_tau: Optional[float] = None
    kendall_pvalue: Optional[float] = None

    @property
    def no_growth(self) -> bool:
        """No increasing trend of discrepancy·N at the 5% level."""
        return self.kendall_pvalue is None or self.kendall_pvalue > 0.05

    def to_dict(self) -> Dict[str, Any]:
        return {
            "experiment": "benchmark-consistency",
            "seed": self.seed,
            "paths": self.paths,
            "N": [e.N for e in self.entries],
            "entries": [e.to_dict() for e in self.entries],
            "kendall_tau": self.kendall_tau,
            "kendall_pvalue": self.kendall_pvalue,
            "no_growth": self.no_growth,
        }


def _benchmark_entry(model: LqModel, v: VCoefficients, u: UCoefficients, cfg: SimConfig) -> BenchmarkEntry:
    problem = LqProblem(model, v)
    report = simulate(problem, cfg, Deviation.none())
    steps = cfg.steps_for(model.T)
    noise = NoiseBundle(cfg.seed, model.T / steps, steps, cfg.N, model.n2, model.n3)
    benchmarks = np.empty(cfg.paths)
    for p in range(cfg.paths):
        X0 = sample_initial_states(cfg.initial, cfg.N, noise.initial_rng(p))
        benchmarks[p] = benchmark_value(u, v, X0[0], EmpiricalMeasure.excluding(X0, 0), 0.0)
    discrepancy, stderr = mean_and_stderr(report.per_path - benchmarks)
    return BenchmarkEntry(cfg.N, discrepancy, stderr, report.mean, float(np.mean(benchmarks)))


def run_benchmark_consistency(
    model: LqModel,
    v: VCoefficients,
    u: UCoefficients,
    cfg: SimConfig,
    N_list: Optional[Sequence[int]] = None,
) -> BenchmarkReport:
    """Per-path J_soc − benchmark on the simulated initial draws, across N."""
    N_list = _check_N_list(N_list if N_list is not None else [cfg.N], 1)
    entries = [_benchmark_entry(model, v, u, cfg.with_changes(N=N)) for N in N_list]
    report = BenchmarkReport(entries, cfg.seed, cfg.paths)
    scaled = np.array([e.scaled for e in entries])
    if len(entries) >= 2 and np.ptp(scaled) > 0.0:
        tau, pvalue = stats.kendalltau(N_list, scaled, alternative="greater")
        report.kendall_tau = float(tau)
        report.kendall_pvalue = float(pvalue)
    for e in entries:
        logger.info(f"Benchmark N={e.N}: discrepancy {e.discrepancy:.4g} ± {e.stderr:.3g}")
    return report
