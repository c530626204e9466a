"""
Pointwise evaluation of V, φ, Ū, δ_μV, M, U and the minimizer functional Φ.

Measures are equal-weight particle clouds; every quadratic form only needs the
cloud mean x̄ and second-moment forms ⟨μ, yᵀMy⟩, both computed exactly.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Dict, Optional

import numpy as np

from ..core.constants import (
    CHECK_RANDOM_CONTROLS,
    CHECK_SAMPLE_POINTS,
    MINIMIZER_TOLERANCE,
    REPRESENTATION_TOLERANCE,
)
from ..core.exceptions import ConfigError
from .model import LqModel
from .synthesis import MCoefficients, UCoefficients, VCoefficients

logger = logging.getLogger(__name__)


def _sym(X: np.ndarray) -> np.ndarray:
    return 0.5 * (X + X.T)


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Equal-weight cloud of k ≥ 1 particles in ℝⁿ."""

    particles: np.ndarray

    def __post_init__(self):
        particles = np.array(self.particles, dtype=float)
        if particles.ndim == 1:
            particles = particles.reshape(1, -1)
        if particles.ndim != 2 or particles.shape[0] < 1:
            raise ConfigError(f"particles must be a non-empty (k, n) array, got shape {particles.shape}")
        if not np.all(np.isfinite(particles)):
            raise ConfigError("particles must be finite")
        particles.setflags(write=False)
        object.__setattr__(self, "particles", particles)

    @classmethod
    def excluding(cls, states: np.ndarray, i: int) -> "EmpiricalMeasure":
        """μ^{-i}: the cloud of every row of `states` except row i."""
        states = np.asarray(states, dtype=float)
        return cls(np.delete(states, i, axis=0))

    @property
    def k(self) -> int:
        return self.particles.shape[0]

    @property
    def n(self) -> int:
        return self.particles.shape[1]

    @cached_property
    def _mean(self) -> np.ndarray:
        return self.particles.mean(axis=0)

    def mean(self) -> np.ndarray:
        return self._mean

    def second_moment_form(self, M: np.ndarray) -> float:
        """⟨μ, yᵀMy⟩."""
        return float(np.einsum("ki,ij,kj->", self.particles, M, self.particles) / self.k)


def _check_dims(x: np.ndarray, mu: EmpiricalMeasure, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != n or mu.n != n:
        raise ConfigError(f"state dimension mismatch: expected {n}, got x={x.size}, mu={mu.n}")
    return x


def eval_V(v: VCoefficients, t: float, x: Any, mu: EmpiricalMeasure) -> float:
    c = v.at(t)
    x = _check_dims(x, mu, v.n)
    xbar = mu.mean()
    return float(
        x @ _sym(c["P"]) @ x
        + xbar @ _sym(c["Lambda"]) @ xbar
        + 2.0 * x @ c["H"] @ xbar
        + 2.0 * x @ c["S"]
        + 2.0 * xbar @ c["theta"]
        + c["r"]
    )


def eval_V_x(v: VCoefficients, t: float, x: Any, mu: EmpiricalMeasure) -> np.ndarray:
    """∂ₓV = 2(Px + Hx̄ + S)."""
    c = v.at(t)
    x = _check_dims(x, mu, v.n)
    return 2.0 * (_sym(c["P"]) @ x + c["H"] @ mu.mean() + c["S"])


def mean_gradient_delta_mu_V(v: VCoefficients, t: float, mu: EmpiricalMeasure) -> np.ndarray:
    """⟨μ(dy), ∂ₓδ_μV(t,y,μ;x)⟩ = 2(Λx̄ + Hᵀx̄ + θ), independent of x."""
    c = v.at(t)
    xbar = mu.mean()
    return 2.0 * (_sym(c["Lambda"]) @ xbar + c["H"].T @ xbar + c["theta"])


def eval_phi(v: VCoefficients, model: LqModel, t: float, x: Any, mu: EmpiricalMeasure) -> np.ndarray:
    """Cooperative feedback −R⁻¹Bᵀ[Px + (Λ+H+Hᵀ)x̄ + S + θ]."""
    c = v.at(t)
    x = _check_dims(x, mu, v.n)
    H = c["H"]
    adjoint = _sym(c["P"]) @ x + (_sym(c["Lambda"]) + H + H.T) @ mu.mean() + c["S"] + c["theta"]
    return -model.R_inv_BT @ adjoint


def eval_Ubar(v: VCoefficients, t: float, mu: EmpiricalMeasure) -> float:
    """Ū(t,μ) = (1/k) Σ_j V(t, y_j, μ)."""
    c = v.at(t)
    Y = mu.particles
    xbar = mu.mean()
    per_particle = (
        np.einsum("ki,ij,kj->k", Y, _sym(c["P"]), Y)
        + xbar @ _sym(c["Lambda"]) @ xbar
        + 2.0 * Y @ (c["H"] @ xbar)
        + 2.0 * Y @ c["S"]
        + 2.0 * xbar @ c["theta"]
        + c["r"]
    )
    return float(per_particle.mean())


def eval_delta_mu_V(v: VCoefficients, t: float, x: Any, mu: EmpiricalMeasure, y: Any) -> float:
    """Linear functional derivative of V in μ at y, normalized to zero μ-mean."""
    c = v.at(t)
    x = _check_dims(x, mu, v.n)
    y = np.asarray(y, dtype=float).reshape(-1)
    xbar = mu.mean()
    Lam, H, th = _sym(c["Lambda"]), c["H"], c["theta"]
    chi = -(2.0 * xbar @ Lam @ xbar + 2.0 * x @ H @ xbar + 2.0 * xbar @ th)
    return float(2.0 * xbar @ Lam @ y + 2.0 * x @ H @ y + 2.0 * y @ th + chi)


def eval_M(m: MCoefficients, t: float, mu: EmpiricalMeasure) -> float:
    c = m.at(t)
    xbar = mu.mean()
    return float(
        mu.second_moment_form(_sym(c["Pi1o"]))
        + xbar @ _sym(c["Pi2o"]) @ xbar
        + 2.0 * xbar @ c["thetao"]
        + c["ro"]
    )


def eval_U(u: UCoefficients, t: float, x: Any, mu: EmpiricalMeasure) -> float:
    c = u.at(t)
    x = _check_dims(x, mu, c["Pi1d"].shape[0])
    xbar = mu.mean()
    return float(
        x @ _sym(c["Pi1d"]) @ x
        + mu.second_moment_form(_sym(c["Pi2d"]))
        + xbar @ _sym(c["Pi3d"]) @ xbar
        + 2.0 * x @ c["Pi4d"] @ xbar
        + 2.0 * x @ c["Sd"]
        + 2.0 * xbar @ c["thetad"]
        + c["rd"]
    )


def representation_value(
    v: VCoefficients, m: MCoefficients, t: float, x: Any, mu: EmpiricalMeasure
) -> float:
    """V + M + ⟨μ(dy), δ_μV(t,y,μ;x) − δ_μV(t,y,μ;y)⟩, evaluated term by term."""
    x = _check_dims(x, mu, v.n)
    correction = np.mean(
        [eval_delta_mu_V(v, t, y, mu, x) - eval_delta_mu_V(v, t, y, mu, y) for y in mu.particles]
    )
    return eval_V(v, t, x, mu) + eval_M(m, t, mu) + float(correction)


def eval_Phi(
    v: VCoefficients, model: LqModel, t: float, x: Any, u: Any, mu: EmpiricalMeasure
) -> float:
    """Φ = (∂ₓV + ⟨μ, ∂ₓδ_μV⟩)·f + L with f = Ax + Bu + Gx̄."""
    x = _check_dims(x, mu, v.n)
    u = np.asarray(u, dtype=float).reshape(-1)
    xbar = mu.mean()
    drift = model.A @ x + model.B @ u + model.G @ xbar
    gap = x - model.Gamma @ xbar - model.eta
    running = gap @ model.Q @ gap + u @ model.R @ u
    gradient = eval_V_x(v, t, x, mu) + mean_gradient_delta_mu_V(v, t, mu)
    return float(gradient @ drift + running)


def benchmark_value(
    u: UCoefficients, v: VCoefficients, x1: Any, mu_minus1: EmpiricalMeasure, t: float = 0.0
) -> float:
    """U(t, x¹, μ⁻¹) + (N−1)·Ū(t, μ⁻¹), the O(N) social-cost benchmark."""
    return eval_U(u, t, x1, mu_minus1) + mu_minus1.k * eval_Ubar(v, t, mu_minus1)


@dataclass
class FieldCheckReport:
    """Outcome of the pointwise representation and minimizer checks."""

    points: int
    max_representation_defect: float
    min_Phi_excess: float
    max_gradient_defect: float

    @property
    def passed(self) -> bool:
        return (
            self.max_representation_defect <= REPRESENTATION_TOLERANCE
            and self.min_Phi_excess >= -MINIMIZER_TOLERANCE
            and self.max_gradient_defect <= 1e-6
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "points": self.points,
            "max_representation_defect": self.max_representation_defect,
            "min_Phi_excess": self.min_Phi_excess,
            "max_gradient_defect": self.max_gradient_defect,
            "passed": self.passed,
        }


def check_fields(
    model: LqModel,
    v: VCoefficients,
    m: MCoefficients,
    u: UCoefficients,
    rng: np.random.Generator,
    points: int = CHECK_SAMPLE_POINTS,
    controls: int = CHECK_RANDOM_CONTROLS,
    particles: int = 5,
    fd_step: Optional[float] = None,
) -> FieldCheckReport:
    """Representation equality and minimizer property at random (t, x, μ).

    The representation defect is relative to 1 + |U|; the gradient defect is the
    central-difference ∂Φ/∂u at φ divided by 1 + ‖φ‖.
    """
    n, n1 = model.n, model.n1
    h = fd_step if fd_step is not None else 1e-4
    worst_rep, worst_excess, worst_grad = 0.0, np.inf, 0.0
    for _ in range(points):
        t = float(rng.uniform(0.0, v.T))
        x = rng.standard_normal(n)
        mu = EmpiricalMeasure(rng.standard_normal((particles, n)))

        u_val = eval_U(u, t, x, mu)
        rep = representation_value(v, m, t, x, mu)
        worst_rep = max(worst_rep, abs(u_val - rep) / (1.0 + abs(u_val)))

        phi = eval_phi(v, model, t, x, mu)
        phi_cost = eval_Phi(v, model, t, x, phi, mu)
        for _ in range(controls):
            direction = rng.standard_normal(n1)
            radius = 10.0 * rng.uniform() ** (1.0 / n1)
            trial = radius * direction / np.linalg.norm(direction)
            worst_excess = min(worst_excess, eval_Phi(v, model, t, x, trial, mu) - phi_cost)

        grad = np.empty(n1)
        for j in range(n1):
            e = np.zeros(n1)
            e[j] = h
            grad[j] = (
                eval_Phi(v, model, t, x, phi + e, mu) - eval_Phi(v, model, t, x, phi - e, mu)
            ) / (2.0 * h)
        worst_grad = max(worst_grad, float(np.linalg.norm(grad)) / (1.0 + float(np.linalg.norm(phi))))

    report = FieldCheckReport(points, worst_rep, float(worst_excess), worst_grad)
    logger.debug(f"Field checks on {points} points: {report.to_dict()}")
    return report
