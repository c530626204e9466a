"""
Euler–Maruyama simulation of the N-agent closed loop with common noise.

Paths are processed in fixed blocks of PATH_BLOCK_SIZE; blocks may run on any
number of worker threads, and their results are always combined in block
order, so a report never depends on MEANFIELD_THREADS.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from ..core.constants import (
    DEFAULT_THREADS,
    DT_DIVISIBILITY_TOLERANCE,
    ENV_VARS,
    MOMENT_WARNING_LEVEL,
    PATH_BLOCK_SIZE,
    PATH_DUMP_MAX_ROWS,
    STATE_BLOWUP_NORM,
    DeviationKind,
)
from ..core.exceptions import BlowUpError, ConfigError, ReportError
from ..lq.model import InitialDistribution, sample_initial_states
from .noise import NoiseBundle
from .problems import ClosedLoopProblem

logger = logging.getLogger(__name__)

BatchedFeedback = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SimConfig:
    """Monte Carlo settings of one simulation."""

    N: int
    paths: int
    dt_sim: float
    seed: int
    initial: InitialDistribution
    threads: Optional[int] = None
    dump_path: Optional[str] = None

    def __post_init__(self):
        errors = self._validate_without_exception()
        if errors:
            raise ConfigError(f"SimConfig validation failed: {'; '.join(errors)}", {"errors": errors})

    def _validate_without_exception(self) -> List[str]:
        errors = []
        if self.N < 2:
            errors.append(f"N must be at least 2, got {self.N}")
        if self.paths < 1:
            errors.append(f"paths must be at least 1, got {self.paths}")
        if not np.isfinite(self.dt_sim) or self.dt_sim <= 0:
            errors.append(f"dt_sim must be positive, got {self.dt_sim}")
        if self.seed < 0:
            errors.append("seed must be non-negative")
        if self.threads is not None and self.threads < 1:
            errors.append("threads must be at least 1")
        return errors

    def steps_for(self, T: float) -> int:
        """Number of simulation steps on [0, T]; dt_sim must divide T."""
        if self.dt_sim > T * (1.0 + DT_DIVISIBILITY_TOLERANCE):
            raise ConfigError(f"dt_sim={self.dt_sim} exceeds the horizon T={T}")
        ratio = T / self.dt_sim
        steps = int(round(ratio))
        if steps < 1 or abs(steps * self.dt_sim - T) > DT_DIVISIBILITY_TOLERANCE * max(1.0, T):
            raise ConfigError(f"dt_sim={self.dt_sim} does not divide T={T}")
        return steps

    def with_changes(self, **changes: Any) -> "SimConfig":
        data = {
            "N": self.N,
            "paths": self.paths,
            "dt_sim": self.dt_sim,
            "seed": self.seed,
            "initial": self.initial,
            "threads": self.threads,
            "dump_path": self.dump_path,
        }
        data.update(changes)
        return SimConfig(**data)


@dataclass(frozen=True)
class Deviation:
    """The control law agent index 0 plays; every other agent plays φ."""

    kind: DeviationKind = DeviationKind.NONE
    scale: float = 1.0
    constant: Optional[np.ndarray] = None
    feedback: Optional[BatchedFeedback] = field(default=None, compare=False)
    label: Optional[str] = None

    @classmethod
    def none(cls) -> "Deviation":
        return cls(DeviationKind.NONE)

    @classmethod
    def zero_control(cls) -> "Deviation":
        return cls(DeviationKind.ZERO_CONTROL)

    @classmethod
    def scaled(cls, kappa: float) -> "Deviation":
        return cls(DeviationKind.SCALED, scale=float(kappa))

    @classmethod
    def constant_control(cls, u0: Any) -> "Deviation":
        return cls(DeviationKind.CONSTANT, constant=np.array(u0, dtype=float).reshape(-1))

    @classmethod
    def custom(cls, feedback: BatchedFeedback, label: str = "custom") -> "Deviation":
        """Batched feedback (t, X[paths, N, n]) -> U[paths, n1] for agent index 0."""
        return cls(DeviationKind.CUSTOM, feedback=feedback, label=label)

    @property
    def is_baseline(self) -> bool:
        return self.kind == DeviationKind.NONE

    def describe(self) -> str:
        if self.label:
            return self.label
        if self.kind == DeviationKind.SCALED:
            return f"scaled({self.scale:g})"
        if self.kind == DeviationKind.CONSTANT:
            return f"constant({','.join(f'{c:g}' for c in self.constant)})"
        return self.kind.value

    def control(self, t: float, X: np.ndarray, phi: np.ndarray) -> np.ndarray:
        """Agent-0 control given the cooperative value phi of shape (paths, n1)."""
        if self.kind == DeviationKind.NONE:
            return phi
        if self.kind == DeviationKind.ZERO_CONTROL:
            return np.zeros_like(phi)
        if self.kind == DeviationKind.SCALED:
            return self.scale * phi
        if self.kind == DeviationKind.CONSTANT:
            if self.constant.shape != phi.shape[1:]:
                raise ConfigError(f"constant control needs {phi.shape[1]} entries")
            return np.broadcast_to(self.constant, phi.shape).copy()
        u = np.asarray(self.feedback(t, X), dtype=float)
        return u.reshape(phi.shape)


@dataclass
class CostReport:
    """Social and individual costs of one Monte Carlo ensemble."""

    per_path: np.ndarray
    mean: float
    stderr: float
    per_agent_mean: np.ndarray
    second_moments: np.ndarray
    max_second_moment: float
    control_energy: np.ndarray
    paths: int
    N: int
    seed: int
    deviation: str = DeviationKind.NONE.value

    def to_dict(self) -> Dict[str, Any]:
        return {
            "deviation": self.deviation,
            "N": self.N,
            "paths": self.paths,
            "seed": self.seed,
            "mean": self.mean,
            "stderr": self.stderr,
            "per_agent_mean": self.per_agent_mean.tolist(),
            "max_second_moment": self.max_second_moment,
            "mean_control_energy": float(np.mean(self.control_energy)),
        }


@dataclass
class PairedReport:
    """Baseline and deviated ensembles on common random numbers."""

    baseline: CostReport
    deviated: CostReport
    differences: np.ndarray
    mean_difference: float
    stderr_difference: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "baseline": self.baseline.to_dict(),
            "deviated": self.deviated.to_dict(),
            "mean_difference": self.mean_difference,
            "stderr_difference": self.stderr_difference,
        }


def mean_and_stderr(samples: np.ndarray) -> Tuple[float, float]:
    samples = np.asarray(samples, dtype=float)
    mean = float(np.mean(samples))
    if samples.size < 2:
        return mean, 0.0
    return mean, float(np.std(samples, ddof=1) / np.sqrt(samples.size))


def worker_count(cfg: SimConfig) -> int:
    if cfg.threads is not None:
        return cfg.threads
    raw = os.getenv(ENV_VARS["THREADS"])
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            logger.warning(f"Ignoring non-integer {ENV_VARS['THREADS']}={raw!r}")
    return DEFAULT_THREADS


@dataclass
class _BlockResult:
    costs: np.ndarray
    energy: np.ndarray
    moment_sums: np.ndarray
    states: Optional[np.ndarray] = None
    controls: Optional[np.ndarray] = None


def _leave_one_out_mean(X: np.ndarray) -> np.ndarray:
    N = X.shape[1]
    return (X.sum(axis=1, keepdims=True) - X) / (N - 1)


def _simulate_block(
    problem: ClosedLoopProblem,
    cfg: SimConfig,
    dev: Deviation,
    noise: NoiseBundle,
    path_ids: range,
    steps: int,
    record: bool,
) -> _BlockResult:
    dt = noise.dt
    X = np.stack([sample_initial_states(cfg.initial, cfg.N, noise.initial_rng(p)) for p in path_ids])
    dW0 = np.stack([noise.common(p) for p in path_ids])
    dW = np.stack([noise.idiosyncratic(p) for p in path_ids])
    D, D0 = problem.D, problem.D0

    b, N = X.shape[0], X.shape[1]
    costs = np.zeros((b, N))
    energy = np.zeros(b)
    moment_sums = np.zeros((steps + 1, N))
    moment_sums[0] = np.sum(X**2, axis=(0, 2))
    states = np.empty((steps + 1,) + X.shape) if record else None
    controls = np.empty((steps, b, N, problem.n1)) if record else None
    if record:
        states[0] = X

    for k in range(steps):
        t = min(k * dt, problem.T)
        xbar = _leave_one_out_mean(X)
        U = problem.feedback(t, X, xbar)
        if not dev.is_baseline:
            U[:, 0, :] = dev.control(t, X, U[:, 0, :])
        costs += problem.running_cost(t, X, U, xbar) * dt
        energy += np.sum(U[:, 0, :] ** 2, axis=1) * dt
        X = X + problem.drift(t, X, U, xbar) * dt + dW[:, k] @ D.T + (dW0[:, k] @ D0.T)[:, None, :]

        norms = np.max(np.abs(X), axis=(1, 2))
        bad = ~(norms <= STATE_BLOWUP_NORM)
        if np.any(bad):
            path = path_ids[int(np.argmax(bad))]
            raise BlowUpError(
                f"simulated state exceeded {STATE_BLOWUP_NORM:g} on path {path} at step {k + 1}",
                time=(k + 1) * dt,
                path=path,
                step=k + 1,
            )
        moment_sums[k + 1] = np.sum(X**2, axis=(0, 2))
        if record:
            states[k + 1] = X
            controls[k] = U

    costs += problem.terminal_cost(X, _leave_one_out_mean(X))
    return _BlockResult(costs, energy, moment_sums, states, controls)


def simulate(
    problem: ClosedLoopProblem, cfg: SimConfig, dev: Optional[Deviation] = None
) -> CostReport:
    """Run the closed loop with agent index 0 playing `dev` and return its costs.

    Raises:
        ConfigError: If dt_sim does not divide T or dimensions disagree
        BlowUpError: If a state leaves the 1e12 box (with path and step)
    """
    dev = dev or Deviation.none()
    steps = cfg.steps_for(problem.T)
    if cfg.initial.n != problem.n:
        raise ConfigError(f"initial law has dimension {cfg.initial.n}, model has {problem.n}")
    record = cfg.dump_path is not None
    if record:
        rows = cfg.N * (steps + 1) * cfg.paths
        if rows > PATH_DUMP_MAX_ROWS:
            raise ConfigError(f"path dump would write {rows} rows (limit {PATH_DUMP_MAX_ROWS})")

    noise = NoiseBundle(cfg.seed, problem.T / steps, steps, cfg.N, problem.n2, problem.n3)
    blocks = [
        range(start, min(start + PATH_BLOCK_SIZE, cfg.paths))
        for start in range(0, cfg.paths, PATH_BLOCK_SIZE)
    ]
    workers = min(worker_count(cfg), len(blocks))
    logger.debug(
        f"Simulating {cfg.paths} paths of N={cfg.N} over {steps} steps "
        f"({len(blocks)} blocks, {workers} workers, deviation {dev.describe()})"
    )

    def run(ids: range) -> _BlockResult:
        return _simulate_block(problem, cfg, dev, noise, ids, steps, record)

    if workers <= 1:
        results = [run(ids) for ids in blocks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, blocks))

    costs = np.concatenate([r.costs for r in results])
    energy = np.concatenate([r.energy for r in results])
    moment_sums = np.zeros_like(results[0].moment_sums)
    for r in results:
        moment_sums += r.moment_sums
    second_moments = moment_sums / cfg.paths

    per_path = costs.sum(axis=1)
    mean, stderr = mean_and_stderr(per_path)
    report = CostReport(
        per_path=per_path,
        mean=mean,
        stderr=stderr,
        per_agent_mean=costs.mean(axis=0),
        second_moments=second_moments,
        max_second_moment=float(np.max(second_moments)),
        control_energy=energy,
        paths=cfg.paths,
        N=cfg.N,
        seed=cfg.seed,
        deviation=dev.describe(),
    )
    moment_audit(report)
    if record:
        _dump_paths(cfg.dump_path, blocks, results, problem.T / steps)
    return report


def paired_simulate(problem: ClosedLoopProblem, cfg: SimConfig, dev: Deviation) -> PairedReport:
    """Baseline and deviation on the identical NoiseBundle and initial draws."""
    baseline = simulate(problem, cfg, Deviation.none())
    deviated = simulate(problem, cfg, dev)
    differences = deviated.per_path - baseline.per_path
    mean, stderr = mean_and_stderr(differences)
    logger.debug(f"Paired gap for {dev.describe()}: {mean:.6g} ± {stderr:.3g}")
    return PairedReport(baseline, deviated, differences, mean, stderr)


def moment_audit(report: CostReport) -> float:
    """max over (i, t) of the sample E|X_t^i|²; warns above MOMENT_WARNING_LEVEL."""
    value = float(np.max(report.second_moments))
    if value > MOMENT_WARNING_LEVEL:
        logger.warning(f"Second moment {value:.3e} exceeds {MOMENT_WARNING_LEVEL:g}; closed loop may diverge")
    return value


def _dump_paths(path: str, blocks: List[range], results: List[_BlockResult], dt: float) -> None:
    frames = []
    for ids, r in zip(blocks, results):
        steps_plus, b, N, n = r.states.shape
        n1 = r.controls.shape[-1]
        controls = np.concatenate([r.controls, np.full((1, b, N, n1), np.nan)])
        grid_t, grid_path, grid_agent = np.meshgrid(
            np.arange(steps_plus) * dt, np.array(list(ids)), np.arange(N), indexing="ij"
        )
        data = {
            "path": grid_path.reshape(-1),
            "t": grid_t.reshape(-1),
            "agent": grid_agent.reshape(-1),
        }
        for j in range(n):
            data[f"state_{j}"] = r.states[..., j].reshape(-1)
        for j in range(n1):
            data[f"control_{j}"] = controls[..., j].reshape(-1)
        frames.append(pd.DataFrame(data))
    frame = pd.concat(frames, ignore_index=True).sort_values(["path", "t", "agent"], kind="stable")
    try:
        frame.to_csv(path, index=False, float_format="%.17g")
    except OSError as e:
        raise ReportError(f"could not write path dump: {e}", path=path) from e
    logger.info(f"Wrote {len(frame)} path rows to {path}")
