"""
Inter-bank lending/borrowing model: exact finite-N solution and master-equation solution.

dX^i = u^i dt + σ(√(1−ρ²) dW^i + ρ dW⁰)
L(x, u, z) = u² + 2qu(x − z) + ε₀(x − z)²,   g(x, z) = c(x − z)²,   z = X^(−i)
"""

import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from .core.constants import SR_IDENTITY_TOLERANCE
from .core.exceptions import ConfigError
from .ode import (
    Block,
    BlockLayout,
    HermiteInterpolant,
    TimeGrid,
    Trajectory,
    integrate_forward,
    integrate_terminal,
    sample,
)
from .simulation.problems import ClosedLoopProblem
from .simulation.simulator import Deviation

logger = logging.getLogger(__name__)

DIRECT_LAYOUT = BlockLayout.of(Block("pi1", ()), Block("pi2", ()), Block("r", ()))
MASTER_LAYOUT = BlockLayout.of(Block("P", ()), Block("Lambda", ()), Block("H", ()), Block("r", ()))


@dataclass(frozen=True)
class SrParams:
    """Scalars of the systemic-risk model."""

    sigma: float
    rho: float
    q: float
    eps0: float
    c: float
    T: float

    def __post_init__(self):
        for name in ("sigma", "rho", "q", "eps0", "c", "T"):
            object.__setattr__(self, name, float(getattr(self, name)))
        errors = self._validate_without_exception()
        if errors:
            raise ConfigError(f"SrParams validation failed: {'; '.join(errors)}", {"errors": errors})

    def _validate_without_exception(self) -> List[str]:
        errors = []
        if self.sigma < 0:
            errors.append("sigma must be non-negative")
        if not 0.0 <= self.rho <= 1.0:
            errors.append("rho must lie in [0, 1]")
        if self.q < 0:
            errors.append("q must be non-negative")
        if self.q**2 > self.eps0 * (1.0 + 1e-12):
            errors.append(f"convexity requires q^2 <= eps0 (q={self.q}, eps0={self.eps0})")
        if self.c < 0:
            errors.append("c must be non-negative")
        if not self.T > 0:
            errors.append("horizon T must be positive")
        return errors

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SrParams":
        return cls(**{k: data[k] for k in ("sigma", "rho", "q", "eps0", "c", "T")})

    def to_dict(self) -> Dict[str, float]:
        return {k: getattr(self, k) for k in ("sigma", "rho", "q", "eps0", "c", "T")}

    @property
    def idiosyncratic_volatility(self) -> float:
        return self.sigma * np.sqrt(1.0 - self.rho**2)

    @property
    def common_volatility(self) -> float:
        return self.sigma * self.rho


def _direct_rhs(params: SrParams, N: int) -> Callable[[float, np.ndarray], np.ndarray]:
    q, eps0 = params.q, params.eps0
    var_idio = params.sigma**2 * (1.0 - params.rho**2)
    var_common = params.sigma**2 * params.rho**2

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        pi1, pi2 = y[0], y[1]
        a = pi1 + q
        b = pi2 - q / (N - 1)
        d_pi1 = a**2 + (N - 1) * b**2 - eps0 * N / (N - 1)
        d_pi2 = 2.0 * a * b + (N - 2) * b**2 + eps0 * N / (N - 1) ** 2
        d_r = -(var_idio * N * pi1 + var_common * (N * pi1 + N * (N - 1) * pi2))
        return np.array([d_pi1, d_pi2, d_r])

    return rhs


def _pd_rhs(params: SrParams) -> Callable[[float, np.ndarray], np.ndarray]:
    q, eps0 = params.q, params.eps0
    return lambda t, y: (y + q) ** 2 - eps0


@dataclass(frozen=True)
class SrDirectSolution:
    """π₁, π₂ and r of the N-agent HJB solution."""

    N: int
    trajectory: Trajectory
    params: SrParams

    def __post_init__(self):
        dense = HermiteInterpolant(self.trajectory, _direct_rhs(self.params, self.N))
        object.__setattr__(self, "_dense", dense)

    @property
    def grid(self) -> TimeGrid:
        return self.trajectory.grid

    @property
    def pi1(self) -> np.ndarray:
        return DIRECT_LAYOUT.series(self.trajectory.values, "pi1")

    @property
    def pi2(self) -> np.ndarray:
        return DIRECT_LAYOUT.series(self.trajectory.values, "pi2")

    @property
    def r_direct(self) -> np.ndarray:
        return DIRECT_LAYOUT.series(self.trajectory.values, "r")

    def coefficients(self, t: float) -> np.ndarray:
        """(π₁, π₂, r) at t, cubic Hermite between grid points."""
        self.grid.check_time(t)
        return self._dense(t)

    def matrix(self, t: float = 0.0) -> np.ndarray:
        """The N×N matrix with diagonal π₁ and off-diagonal π₂."""
        pi1, pi2, _ = self.coefficients(t)
        return (pi1 - pi2) * np.eye(self.N) + pi2 * np.ones((self.N, self.N))


@dataclass(frozen=True)
class SrMasterSolution:
    """P, Λ, H, r of the master-equation ansatz together with P_d."""

    trajectory: Trajectory
    Pd_trajectory: Trajectory
    params: SrParams

    def __post_init__(self):
        object.__setattr__(self, "_dense_Pd", HermiteInterpolant(self.Pd_trajectory, _pd_rhs(self.params)))

    @property
    def grid(self) -> TimeGrid:
        return self.trajectory.grid

    def series(self, name: str) -> np.ndarray:
        return MASTER_LAYOUT.series(self.trajectory.values, name)

    @property
    def P(self) -> np.ndarray:
        return self.series("P")

    @property
    def Lambda(self) -> np.ndarray:
        return self.series("Lambda")

    @property
    def H(self) -> np.ndarray:
        return self.series("H")

    @property
    def r(self) -> np.ndarray:
        return self.series("r")

    @property
    def Pd(self) -> np.ndarray:
        return self.Pd_trajectory.values[:, 0]

    def at(self, t: float) -> Dict[str, float]:
        out = MASTER_LAYOUT.unpack(sample(self.trajectory, t))
        out["Pd"] = float(sample(self.Pd_trajectory, t)[0])
        return out

    def Pd_at(self, t: float) -> float:
        """P_d(t), cubic Hermite between grid points."""
        self.grid.check_time(t)
        return float(self._dense_Pd(t)[0])

    def identity_defect(self) -> float:
        """max_t |Λ + 2H + P|."""
        return float(np.max(np.abs(self.Lambda + 2.0 * self.H + self.P)))

    def pd_defect(self) -> float:
        """max_t |P − P_d|."""
        return float(np.max(np.abs(self.P - self.Pd)))


def solve_direct(params: SrParams, N: int, grid: TimeGrid) -> SrDirectSolution:
    """Integrate (π₁, π₂, r) backward as one coupled system."""
    if N < 2:
        raise ConfigError(f"the direct solution needs N >= 2, got {N}")
    c = params.c
    terminal = np.array([c * N / (N - 1), -c * N / (N - 1) ** 2, 0.0])
    traj = integrate_terminal(_direct_rhs(params, N), terminal, grid)
    logger.debug(f"Direct solution for N={N}: pi1(0)={traj.initial[0]:.6g}")
    return SrDirectSolution(N, traj, params)


def solve_Pd(params: SrParams, grid: TimeGrid) -> Trajectory:
    """Scalar Riccati Ṗ_d = (P_d + q)² − ε₀, P_d(T) = c."""
    return integrate_terminal(_pd_rhs(params), np.array([params.c]), grid)


def solve_master(params: SrParams, grid: TimeGrid) -> SrMasterSolution:
    """P, H, r with Λ + 2H replaced by −P; then Λ = −P − 2H."""
    q, eps0, sigma2, rho2 = params.q, params.eps0, params.sigma**2, params.rho**2

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        P, H = y[0], y[1]
        return np.array(
            [
                (P + q) ** 2 - eps0,
                (P + q) * (H - q) + eps0,
                -sigma2 * P + sigma2 * rho2 * P,
            ]
        )

    c = params.c
    reduced = integrate_terminal(rhs, np.array([c, -c, 0.0]), grid)
    P, H, r = reduced.values.T
    values = np.column_stack([P, -P - 2.0 * H, H, r])
    values[-1] = [c, c, -c, 0.0]
    solution = SrMasterSolution(Trajectory(grid, values), solve_Pd(params, grid), params)
    defect = solution.identity_defect()
    if defect > SR_IDENTITY_TOLERANCE:
        logger.warning(f"Λ + 2H + P identity defect {defect:.3e} above {SR_IDENTITY_TOLERANCE:g}")
    return solution


def solve_master_coupled(params: SrParams, grid: TimeGrid) -> SrMasterSolution:
    """Integrate the full (P, Λ, H, r) system without the Λ + 2H = −P reduction."""
    q, eps0, sigma2, rho2 = params.q, params.eps0, params.sigma**2, params.rho**2

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        P, Lam, H = y[0], y[1], y[2]
        Z1 = Lam + 2.0 * H
        return np.array(
            [
                (P + q) ** 2 - eps0,
                -((Lam + H) ** 2) + (H - q) ** 2 + 2.0 * Lam * (P + Z1) - eps0,
                (P + q) * (H - q) + H * (P + Z1) + eps0,
                -sigma2 * P - sigma2 * rho2 * Z1,
            ]
        )

    c = params.c
    traj = integrate_terminal(rhs, np.array([c, c, -c, 0.0]), grid)
    return SrMasterSolution(traj, solve_Pd(params, grid), params)


def control_direct(sol: SrDirectSolution, t: float, x_vec: Sequence[float], i: int) -> float:
    """−(π₁+q)xⁱ − (π₂ − q/(N−1)) Σ_{k≠i} xᵏ (0-based i)."""
    x = np.asarray(x_vec, dtype=float).reshape(-1)
    if x.size != sol.N:
        raise ConfigError(f"state vector has {x.size} entries, solution is for N={sol.N}")
    pi1, pi2, _ = sol.coefficients(t)
    q = sol.params.q
    others = x.sum() - x[i]
    return float(-(pi1 + q) * x[i] - (pi2 - q / (sol.N - 1)) * others)


def control_limit(ms: SrMasterSolution, t: float, x: float, xbar: float) -> float:
    """(P_d(t) + q)(x̄ − x)."""
    return float((ms.at(t)["Pd"] + ms.params.q) * (xbar - x))


def control_limit_master_form(ms: SrMasterSolution, t: float, x: float, xbar: float) -> float:
    """−[(P + q)x + (Λ + 2H − q)x̄]."""
    c = ms.at(t)
    q = ms.params.q
    return float(-((c["P"] + q) * x + (c["Lambda"] + 2.0 * c["H"] - q) * xbar))


def exact_social_value(sol: SrDirectSolution, x_vec: Sequence[float]) -> float:
    """xᵀ𝐏(0)x + r(0)."""
    x = np.asarray(x_vec, dtype=float).reshape(-1)
    if x.size != sol.N:
        raise ConfigError(f"state vector has {x.size} entries, solution is for N={sol.N}")
    pi1, pi2, r0 = sol.trajectory.initial
    total = x.sum()
    squares = float(x @ x)
    return float(pi1 * squares + pi2 * (total**2 - squares) + r0)


def direct_feedback(sol: SrDirectSolution) -> Callable[[float, np.ndarray], np.ndarray]:
    """Finite-N optimal law for every agent: (t, x[N]) -> u[N]."""
    q, N = sol.params.q, sol.N

    def feedback(t: float, x: np.ndarray) -> np.ndarray:
        pi1, pi2, _ = sol.coefficients(t)
        return -(pi1 + q) * x - (pi2 - q / (N - 1)) * (x.sum() - x)

    return feedback


def limit_feedback(ms: SrMasterSolution) -> Callable[[float, np.ndarray], np.ndarray]:
    """Limit law with the leave-one-out mean: (t, x[N]) -> u[N]."""
    q = ms.params.q

    def feedback(t: float, x: np.ndarray) -> np.ndarray:
        N = x.size
        xbar = (x.sum() - x) / (N - 1)
        return (ms.Pd_at(t) + q) * (xbar - x)

    return feedback


def rollout_social_cost(
    params: SrParams,
    feedback: Callable[[float, np.ndarray], np.ndarray],
    x0: Sequence[float],
    grid: TimeGrid,
) -> float:
    """Deterministic (σ = 0) social cost of an N-agent feedback law by RK4 rollout."""
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    N = x0.size
    q, eps0, c = params.q, params.eps0, params.c

    def deviations(x: np.ndarray) -> np.ndarray:
        return x - (x.sum() - x) / (N - 1)

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        x = y[:N]
        u = feedback(t, x)
        d = deviations(x)
        running = np.sum(u**2 + 2.0 * q * u * d + eps0 * d**2)
        return np.concatenate([u, [running]])

    traj = integrate_forward(rhs, np.concatenate([x0, [0.0]]), grid)
    x_T = traj.terminal[:N]
    return float(traj.terminal[N] + c * np.sum(deviations(x_T) ** 2))


def sr_table(direct: SrDirectSolution, master: SrMasterSolution) -> pd.DataFrame:
    """Columns t, pi1, pi2, Pd, P, Lambda, H, r on the shared grid."""
    if direct.grid != master.grid:
        raise ConfigError("direct and master solutions live on different grids")
    return pd.DataFrame(
        {
            "t": direct.grid.times,
            "pi1": direct.pi1,
            "pi2": direct.pi2,
            "Pd": master.Pd,
            "P": master.P,
            "Lambda": master.Lambda,
            "H": master.H,
            "r": master.r,
        }
    )


@dataclass
class ConvergenceReport:
    """Finite-N coefficient errors e₁(N), e₂(N) and their log–log slopes."""

    N_list: List[int]
    e1: List[float]
    e2: List[float]
    slope_e1: Optional[float]
    slope_e2: Optional[float]
    slope_e1_stderr: Optional[float]
    slope_e2_stderr: Optional[float]

    @property
    def e1_monotone(self) -> bool:
        return all(b <= a for a, b in zip(self.e1, self.e1[1:]))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"N": self.N_list, "e1": self.e1, "e2": self.e2})

    def to_dict(self) -> Dict[str, Any]:
        return {
            "experiment": "systemic-risk-convergence",
            "N": list(self.N_list),
            "e1": list(self.e1),
            "e2": list(self.e2),
            "slope_e1": self.slope_e1,
            "slope_e2": self.slope_e2,
            "slope_e1_stderr": self.slope_e1_stderr,
            "slope_e2_stderr": self.slope_e2_stderr,
            "e1_monotone": self.e1_monotone,
        }


def _log_slope(N_list: Sequence[int], errors: Sequence[float]):
    if min(errors) <= 0.0:
        return None, None
    fit = stats.linregress(np.log(N_list), np.log(errors))
    return float(fit.slope), float(fit.stderr)


def convergence_report(params: SrParams, N_list: Sequence[int], grid: TimeGrid) -> ConvergenceReport:
    """sup_t|π₁ − P_d| and sup_t|(N−1)π₂ + P_d| across N with log–log slopes."""
    N_list = [int(N) for N in N_list]
    if len(N_list) < 4:
        raise ConfigError(f"convergence report needs at least 4 values of N, got {len(N_list)}")
    if any(b <= a for a, b in zip(N_list, N_list[1:])):
        raise ConfigError("N list must be strictly increasing")
    Pd = solve_Pd(params, grid).values[:, 0]
    e1, e2 = [], []
    for N in N_list:
        sol = solve_direct(params, N, grid)
        e1.append(float(np.max(np.abs(sol.pi1 - Pd))))
        e2.append(float(np.max(np.abs((N - 1) * sol.pi2 + Pd))))
    s1, se1 = _log_slope(N_list, e1)
    s2, se2 = _log_slope(N_list, e2)
    if s1 is None or s2 is None:
        logger.warning("Some convergence errors are exactly zero; slopes not fitted")
    else:
        logger.info(f"Convergence slopes: e1 {s1:.3f}, e2 {s2:.3f}")
    return ConvergenceReport(N_list, e1, e2, s1, s2, se1, se2)


class SystemicRiskProblem(ClosedLoopProblem):
    """Systemic-risk closed loop for the particle simulator.

    Every agent plays either the limit law (P_d + q)(x̄^(−i) − xⁱ) or, when a
    direct solution is given, the exact finite-N optimal law.
    """

    name = "systemic_risk"

    def __init__(
        self,
        params: SrParams,
        master: Optional[SrMasterSolution] = None,
        direct: Optional[SrDirectSolution] = None,
    ):
        if (master is None) == (direct is None):
            raise ConfigError("SystemicRiskProblem needs exactly one of master or direct")
        self.params = params
        self.master = master
        self.direct = direct
        self._D = np.array([[params.idiosyncratic_volatility]])
        self._D0 = np.array([[params.common_volatility]])

    @classmethod
    def limit(cls, params: SrParams, master: SrMasterSolution) -> "SystemicRiskProblem":
        return cls(params, master=master)

    @classmethod
    def optimal(cls, params: SrParams, direct: SrDirectSolution) -> "SystemicRiskProblem":
        return cls(params, direct=direct)

    @property
    def T(self) -> float:
        return self.params.T

    @property
    def n(self) -> int:
        return 1

    @property
    def n1(self) -> int:
        return 1

    @property
    def D(self) -> np.ndarray:
        return self._D

    @property
    def D0(self) -> np.ndarray:
        return self._D0

    def feedback(self, t: float, X: np.ndarray, xbar: np.ndarray) -> np.ndarray:
        q = self.params.q
        if self.direct is not None:
            N = X.shape[1]
            if N != self.direct.N:
                raise ConfigError(f"direct solution is for N={self.direct.N}, simulation has N={N}")
            pi1, pi2, _ = self.direct.coefficients(t)
            others = X.sum(axis=1, keepdims=True) - X
            return -(pi1 + q) * X - (pi2 - q / (N - 1)) * others
        Pd = self.master.Pd_at(t)
        return (Pd + q) * (xbar - X)

    def drift(self, t: float, X: np.ndarray, U: np.ndarray, xbar: np.ndarray) -> np.ndarray:
        return U.copy()

    def running_cost(self, t: float, X: np.ndarray, U: np.ndarray, xbar: np.ndarray) -> np.ndarray:
        d = (X - xbar)[..., 0]
        u = U[..., 0]
        return u**2 + 2.0 * self.params.q * u * d + self.params.eps0 * d**2

    def terminal_cost(self, X: np.ndarray, xbar: np.ndarray) -> np.ndarray:
        return self.params.c * ((X - xbar)[..., 0]) ** 2


def direct_deviation(sol: SrDirectSolution) -> Deviation:
    """Agent index 0 switches to the exact finite-N optimal law."""
    q, N = sol.params.q, sol.N

    def feedback(t: float, X: np.ndarray) -> np.ndarray:
        pi1, pi2, _ = sol.coefficients(t)
        x0 = X[:, 0, :]
        others = X.sum(axis=1) - x0
        return -(pi1 + q) * x0 - (pi2 - q / (N - 1)) * others

    return Deviation.custom(feedback, label="direct-optimal")
