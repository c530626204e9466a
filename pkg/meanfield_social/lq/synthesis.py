"""
Coefficient ODE systems for the quadratic value functions V, M and U.

V(t,x,μ) = xᵀPx + x̄ᵀΛx̄ + 2xᵀHx̄ + 2xᵀS + 2x̄ᵀθ + r
M(t,μ)   = ⟨μ, yᵀΠ₁ᵒy⟩ + x̄ᵀΠ₂ᵒx̄ + 2x̄ᵀθᵒ + rᵒ
U(t,x,μ) = xᵀΠ₁◇x + ⟨μ, yᵀΠ₂◇y⟩ + x̄ᵀΠ₃◇x̄ + 2xᵀΠ₄◇x̄ + 2xᵀS◇ + 2x̄ᵀθ◇ + r◇

The production V solve decouples the system through Z = P + Λ + H + Hᵀ, which
obeys a standard Riccati equation; `solve_V_coupled` integrates the full
system directly and serves as an independent cross-check.
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np
import pandas as pd

from ..core.constants import (
    MINIMIZER_TOLERANCE,
    ODE_RESIDUAL_TOLERANCE,
    TERMINAL_TOLERANCE,
    Z_IDENTITY_TOLERANCE,
)
from ..core.exceptions import ConfigError
from ..ode import (
    Block,
    BlockLayout,
    HermiteInterpolant,
    TimeGrid,
    Trajectory,
    integrate_terminal,
    sample,
)
from ..ode.engine import Rhs
from .model import LqModel, validate

logger = logging.getLogger(__name__)


@lru_cache(maxsize=None)
def square_layout(name: str, n: int, symmetric: bool = True) -> BlockLayout:
    return BlockLayout.of(Block(name, (n, n), symmetric))


@lru_cache(maxsize=None)
def v_layout(n: int) -> BlockLayout:
    return BlockLayout.of(
        Block("P", (n, n), symmetric=True),
        Block("Lambda", (n, n), symmetric=True),
        Block("H", (n, n)),
        Block("S", (n,)),
        Block("theta", (n,)),
        Block("r", ()),
    )


@lru_cache(maxsize=None)
def m_layout(n: int) -> BlockLayout:
    return BlockLayout.of(
        Block("Pi1o", (n, n), symmetric=True),
        Block("Pi2o", (n, n), symmetric=True),
        Block("thetao", (n,)),
        Block("ro", ()),
    )


@lru_cache(maxsize=None)
def u_layout(n: int) -> BlockLayout:
    return BlockLayout.of(
        Block("Pi1d", (n, n), symmetric=True),
        Block("Pi2d", (n, n), symmetric=True),
        Block("Pi3d", (n, n), symmetric=True),
        Block("Pi4d", (n, n)),
        Block("Sd", (n,)),
        Block("thetad", (n,)),
        Block("rd", ()),
    )


@dataclass(frozen=True)
class CoefficientSet:
    """A packed coefficient trajectory together with its block layout."""

    trajectory: Trajectory
    layout: BlockLayout

    def __post_init__(self):
        if self.trajectory.dim != self.layout.size:
            raise ConfigError(
                f"trajectory width {self.trajectory.dim} does not match layout size {self.layout.size}"
            )

    @property
    def grid(self) -> TimeGrid:
        return self.trajectory.grid

    @property
    def times(self) -> np.ndarray:
        return self.trajectory.times

    @property
    def T(self) -> float:
        return self.grid.T

    def series(self, name: str) -> np.ndarray:
        return self.layout.series(self.trajectory.values, name)

    def at(self, t: float) -> Dict[str, Any]:
        """All blocks at time t (linear interpolation between grid points)."""
        return self.layout.unpack(sample(self.trajectory, t))

    def terminal(self) -> Dict[str, Any]:
        return self.layout.unpack(self.trajectory.terminal)

    def to_frame(self) -> pd.DataFrame:
        """One row per grid point: `t` followed by the flattened blocks."""
        frame = pd.DataFrame(self.trajectory.values, columns=self.layout.column_names())
        frame.insert(0, "t", self.times)
        return frame


@dataclass(frozen=True)
class VCoefficients(CoefficientSet):
    """P, Λ, H, S, θ, r on a shared grid; Z kept when solved through it."""

    Z: Optional[Trajectory] = field(default=None, compare=False)

    @property
    def n(self) -> int:
        return self.layout.block("P").shape[0]

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
    def S(self) -> np.ndarray:
        return self.series("S")

    @property
    def theta(self) -> np.ndarray:
        return self.series("theta")

    @property
    def r(self) -> np.ndarray:
        return self.series("r")

    def z_sum(self) -> np.ndarray:
        """P + Λ + H + Hᵀ at every grid point."""
        H = self.H
        return self.P + self.Lambda + H + np.swapaxes(H, 1, 2)


@dataclass(frozen=True)
class MCoefficients(CoefficientSet):
    """Π₁ᵒ, Π₂ᵒ, θᵒ, rᵒ on a shared grid."""

    @property
    def Pi1o(self) -> np.ndarray:
        return self.series("Pi1o")

    @property
    def Pi2o(self) -> np.ndarray:
        return self.series("Pi2o")

    @property
    def thetao(self) -> np.ndarray:
        return self.series("thetao")

    @property
    def ro(self) -> np.ndarray:
        return self.series("ro")


@dataclass(frozen=True)
class UCoefficients(CoefficientSet):
    """Π₁◇ … r◇ assembled pointwise from V and M."""

    @property
    def Pi1d(self) -> np.ndarray:
        return self.series("Pi1d")

    @property
    def Pi2d(self) -> np.ndarray:
        return self.series("Pi2d")

    @property
    def Pi3d(self) -> np.ndarray:
        return self.series("Pi3d")

    @property
    def Pi4d(self) -> np.ndarray:
        return self.series("Pi4d")

    @property
    def Sd(self) -> np.ndarray:
        return self.series("Sd")

    @property
    def thetad(self) -> np.ndarray:
        return self.series("thetad")

    @property
    def rd(self) -> np.ndarray:
        return self.series("rd")


def _require_valid(model: LqModel) -> None:
    validate(model).raise_if_failed()


def _riccati_rhs(F: np.ndarray, K: np.ndarray, C: np.ndarray) -> Rhs:
    """Ẋ = −FᵀX − XF + XKX − C on a flattened n×n state."""
    n = F.shape[0]

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        X = y.reshape(n, n)
        return (-F.T @ X - X @ F + X @ K @ X - C).reshape(-1)

    return rhs


def p_system(model: LqModel) -> Tuple[Rhs, np.ndarray]:
    """Right-hand side and terminal value of the standalone P Riccati equation."""
    return _riccati_rhs(model.A, model.K, model.Q), model.Qf.reshape(-1).copy()


def z_system(model: LqModel) -> Tuple[Rhs, np.ndarray]:
    """Right-hand side and terminal value of the Z Riccati equation."""
    eye = np.eye(model.n)
    forcing = (eye - model.Gamma).T @ model.Q @ (eye - model.Gamma)
    terminal = (eye - model.Gammaf).T @ model.Qf @ (eye - model.Gammaf)
    forcing = 0.5 * (forcing + forcing.T)
    terminal = 0.5 * (terminal + terminal.T)
    return _riccati_rhs(model.A + model.G, model.K, forcing), terminal.reshape(-1)


def v_terminal(model: LqModel) -> Dict[str, Any]:
    Qf, Gf, etaf = model.Qf, model.Gammaf, model.etaf
    lam = Gf.T @ Qf @ Gf
    return {
        "P": Qf,
        "Lambda": 0.5 * (lam + lam.T),
        "H": -Qf @ Gf,
        "S": -Qf @ etaf,
        "theta": Gf.T @ Qf @ etaf,
        "r": float(etaf @ Qf @ etaf),
    }


def v_rhs(model: LqModel) -> Rhs:
    """The full coupled (P, Λ, H, S, θ, r) system on the V layout."""
    layout = v_layout(model.n)
    A, G, K, Q = model.A, model.G, model.K, model.Q
    Q_gamma = Q @ model.Gamma
    gamma_Q_gamma = model.Gamma.T @ Q_gamma
    Q_eta = Q @ model.eta
    gamma_Q_eta = model.Gamma.T @ Q_eta
    eta_Q_eta = float(model.eta @ Q_eta)
    DDT, D0D0T = model.DDT, model.D0D0T

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        c = layout.unpack(y)
        P, Lam, H, S, th = c["P"], c["Lambda"], c["H"], c["S"], c["theta"]
        Z = P + Lam + H + H.T
        A_bar = A + G - K @ Z
        s = S + th
        dP = -A.T @ P - P @ A + P @ K @ P - Q
        dLam = (
            -(Lam + H) @ K @ (Lam + H.T)
            - Lam @ A_bar
            - A_bar.T @ Lam
            + H.T @ K @ H
            - H.T @ G
            - G.T @ H
            - gamma_Q_gamma
        )
        dH = -A.T @ H + P @ K @ H - H @ A_bar - P @ G + Q_gamma
        dS = -A.T @ S + P @ K @ S + H @ K @ s + Q_eta
        dth = H.T @ K @ S + Lam @ K @ s - A_bar.T @ th - (Lam + H) @ K @ th - G.T @ S - gamma_Q_eta
        dr = s @ K @ s - np.trace(Z @ D0D0T) - np.trace(P @ DDT) - eta_Q_eta
        return layout.pack(P=dP, Lambda=dLam, H=dH, S=dS, theta=dth, r=dr)

    return rhs


def m_rhs(model: LqModel, v_at: Callable[[float], np.ndarray]) -> Rhs:
    """The linear (Π₁ᵒ, Π₂ᵒ, θᵒ, rᵒ) system driven by V.

    Args:
        model: LQ model
        v_at: Map t -> packed V state (V layout) at time t
    """
    n = model.n
    vl, ml = v_layout(n), m_layout(n)
    A, G, K = model.A, model.G, model.K
    DDT, D0D0T = model.DDT, model.D0D0T

    def rhs(t: float, y: np.ndarray) -> np.ndarray:
        v = vl.unpack(v_at(t))
        P, Lam, H = v["P"], v["Lambda"], v["H"]
        s = v["S"] + v["theta"]
        c = ml.unpack(y)
        Pi1, Pi2, tho = c["Pi1o"], c["Pi2o"], c["thetao"]

        G_hat = G - K @ (Lam + H + H.T)
        A_cl = A - K @ P
        A_hat = A_cl + G_hat
        HG = H @ G_hat
        HG_sym = HG + HG.T
        dPi1 = -Pi1 @ A_cl - A_cl.T @ Pi1 - HG_sym
        dPi2 = -Pi2 @ A_hat - A_hat.T @ Pi2 - Pi1 @ G_hat - G_hat.T @ Pi1 + HG_sym
        Ks = K @ s
        dtho = -A_hat.T @ tho + (Pi1 + Pi2) @ Ks
        dro = 2.0 * tho @ Ks - np.trace((Pi1 + Lam) @ DDT + (Pi1 + Pi2) @ D0D0T)
        return ml.pack(Pi1o=dPi1, Pi2o=dPi2, thetao=dtho, ro=dro)

    return rhs


def solve_Z(model: LqModel, grid: TimeGrid) -> Trajectory:
    """Standard symmetric Riccati solution for Z on [0, T]."""
    _require_valid(model)
    rhs, terminal = z_system(model)
    return integrate_terminal(rhs, terminal, grid, square_layout("Z", model.n))


def solve_V(model: LqModel, grid: TimeGrid) -> VCoefficients:
    """Solve the V system stage by stage: P, Z, H, Λ, (S, θ), r.

    Later stages read earlier ones through cubic Hermite interpolants whose
    slopes are the stage right-hand sides, so every stage stays fourth order.

    Raises:
        ModelValidationError: If the model is invalid
        BlowUpError: If P or Z escapes in finite time
    """
    _require_valid(model)
    n = model.n
    A, G, K, Q = model.A, model.G, model.K, model.Q
    Q_gamma = Q @ model.Gamma
    Q_eta = Q @ model.eta
    gamma_Q_eta = model.Gamma.T @ Q_eta
    eta_Q_eta = float(model.eta @ Q_eta)
    terminal = v_terminal(model)

    p_rhs, p_terminal = p_system(model)
    P_traj = integrate_terminal(p_rhs, p_terminal, grid, square_layout("P", n))
    P_of = HermiteInterpolant(P_traj, p_rhs)
    logger.debug(f"P stage done on {grid.steps} steps")

    z_rhs, z_terminal = z_system(model)
    Z_traj = integrate_terminal(z_rhs, z_terminal, grid, square_layout("Z", n))
    Z_of = HermiteInterpolant(Z_traj, z_rhs)

    def h_rhs(t: float, y: np.ndarray) -> np.ndarray:
        P = P_of(t).reshape(n, n)
        A_bar = A + G - K @ Z_of(t).reshape(n, n)
        H = y.reshape(n, n)
        return (-A.T @ H + P @ K @ H - H @ A_bar - P @ G + Q_gamma).reshape(-1)

    H_traj = integrate_terminal(h_rhs, terminal["H"].reshape(-1), grid)
    H_of = HermiteInterpolant(H_traj, h_rhs)

    def st_rhs(t: float, y: np.ndarray) -> np.ndarray:
        P = P_of(t).reshape(n, n)
        Z = Z_of(t).reshape(n, n)
        H = H_of(t).reshape(n, n)
        Lam = Z - P - H - H.T
        A_bar = A + G - K @ Z
        S, th = y[:n], y[n:]
        s = S + th
        dS = -A.T @ S + P @ K @ S + H @ K @ s + Q_eta
        dth = H.T @ K @ S + Lam @ K @ s - A_bar.T @ th - (Lam + H) @ K @ th - G.T @ S - gamma_Q_eta
        return np.concatenate([dS, dth])

    ST_traj = integrate_terminal(st_rhs, np.concatenate([terminal["S"], terminal["theta"]]), grid)
    ST_of = HermiteInterpolant(ST_traj, st_rhs)

    DDT, D0D0T = model.DDT, model.D0D0T

    def r_rhs(t: float, y: np.ndarray) -> np.ndarray:
        P = P_of(t).reshape(n, n)
        Z = Z_of(t).reshape(n, n)
        st = ST_of(t)
        s = st[:n] + st[n:]
        return np.array([s @ K @ s - np.trace(Z @ D0D0T) - np.trace(P @ DDT) - eta_Q_eta])

    r_traj = integrate_terminal(r_rhs, np.array([terminal["r"]]), grid)

    rows = grid.steps + 1
    P_vals = P_traj.values.reshape(rows, n, n)
    H_vals = H_traj.values.reshape(rows, n, n)
    Lam_vals = Z_traj.values.reshape(rows, n, n) - P_vals - H_vals - np.swapaxes(H_vals, 1, 2)
    Lam_vals = 0.5 * (Lam_vals + np.swapaxes(Lam_vals, 1, 2))
    values = np.hstack(
        [
            P_traj.values,
            Lam_vals.reshape(rows, -1),
            H_traj.values,
            ST_traj.values,
            r_traj.values,
        ]
    )
    # terminal row is set exactly rather than through Z − P − H − Hᵀ
    values[-1] = v_layout(n).pack(**terminal)
    logger.debug("V stages assembled")
    return VCoefficients(Trajectory(grid, values), v_layout(n), Z=Z_traj)


def solve_V_coupled(model: LqModel, grid: TimeGrid) -> VCoefficients:
    """Integrate the full coupled V system in one pass (no Z decoupling)."""
    _require_valid(model)
    layout = v_layout(model.n)
    traj = integrate_terminal(v_rhs(model), layout.pack(**v_terminal(model)), grid, layout)
    return VCoefficients(traj, layout)


def solve_M(model: LqModel, v: VCoefficients, grid: TimeGrid) -> MCoefficients:
    """Solve the linear M system using the V coefficients on the same grid."""
    if v.grid != grid:
        raise ConfigError("V coefficients were solved on a different grid")
    n = model.n
    v_of = HermiteInterpolant(v.trajectory, v_rhs(model))
    layout = m_layout(n)
    terminal = np.zeros(layout.size)
    traj = integrate_terminal(m_rhs(model, v_of), terminal, grid, layout)
    logger.debug("M system solved")
    return MCoefficients(traj, layout)


def assemble_U(v: VCoefficients, m: MCoefficients) -> UCoefficients:
    """Pointwise identification of the U coefficients. No integration."""
    if v.grid != m.grid:
        raise ConfigError("V and M coefficients live on different grids")
    n = v.n
    H = v.H
    H_sym = H + np.swapaxes(H, 1, 2)
    Lam = v.Lambda
    rows = v.grid.steps + 1
    blocks = [
        v.P,
        m.Pi1o - H_sym,
        m.Pi2o - Lam,
        Lam + H_sym,
        v.S + v.theta,
        m.thetao,
        v.r + m.ro,
    ]
    values = np.hstack([b.reshape(rows, -1) for b in blocks])
    return UCoefficients(Trajectory(v.grid, values), u_layout(n))


def solve_all(model: LqModel, grid: TimeGrid) -> Tuple[VCoefficients, MCoefficients, UCoefficients]:
    """V, then M, then U on one grid."""
    v = solve_V(model, grid)
    m = solve_M(model, v, grid)
    u = assemble_U(v, m)
    logger.info(f"Solved V/M/U coefficients for n={model.n} on {grid.steps} steps")
    return v, m, u


@dataclass
class ResidualReport:
    """Max-over-grid defects of a solved V/M/U triple."""

    steps: int
    z_identity: float
    ode_residuals: Dict[str, float]
    symmetry_defects: Dict[str, float]
    terminal_defects: Dict[str, float]
    assembly_defects: Dict[str, float]
    min_P_eigenvalue: float

    def failures(self) -> Dict[str, float]:
        """Every quantity that misses its tolerance, keyed by a readable name."""
        bad: Dict[str, float] = {}
        if self.z_identity > Z_IDENTITY_TOLERANCE:
            bad["z_identity"] = self.z_identity
        for group, values, tol in (
            ("ode", self.ode_residuals, ODE_RESIDUAL_TOLERANCE),
            ("symmetry", self.symmetry_defects, TERMINAL_TOLERANCE),
            ("terminal", self.terminal_defects, TERMINAL_TOLERANCE),
            ("assembly", self.assembly_defects, TERMINAL_TOLERANCE),
        ):
            for name, value in values.items():
                if not value <= tol:
                    bad[f"{group}.{name}"] = value
        if self.min_P_eigenvalue < -MINIMIZER_TOLERANCE:
            bad["min_P_eigenvalue"] = self.min_P_eigenvalue
        return bad

    @property
    def passed(self) -> bool:
        return not self.failures()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "steps": self.steps,
            "z_identity": self.z_identity,
            "ode_residuals": dict(self.ode_residuals),
            "symmetry_defects": dict(self.symmetry_defects),
            "terminal_defects": dict(self.terminal_defects),
            "assembly_defects": dict(self.assembly_defects),
            "min_P_eigenvalue": self.min_P_eigenvalue,
            "passed": self.passed,
            "failures": self.failures(),
        }


def _max_abs(x: Any) -> float:
    return float(np.max(np.abs(x))) if np.size(x) else 0.0


def _central_residuals(cs: CoefficientSet, rhs: Rhs) -> Dict[str, float]:
    values = cs.trajectory.values
    times = cs.times
    h = cs.grid.h
    if cs.grid.steps < 2:
        return {name: 0.0 for name in cs.layout.names}
    diffs = (values[2:] - values[:-2]) / (2.0 * h)
    fields = np.array([rhs(times[k], values[k]) for k in range(1, cs.grid.steps)])
    defect = diffs - fields
    return {name: _max_abs(cs.layout.series(defect, name)) for name in cs.layout.names}


def _symmetry_defect(series: np.ndarray) -> float:
    return _max_abs(series - np.swapaxes(series, 1, 2))


def check_identities(
    v: VCoefficients, m: MCoefficients, u: UCoefficients, model: LqModel
) -> ResidualReport:
    """Audit a solved triple: Z identity, ODE residuals, symmetry, terminals."""
    grid = v.grid
    if m.grid != grid or u.grid != grid:
        raise ConfigError("V, M and U must share one grid")

    Z = v.Z if v.Z is not None else solve_Z(model, grid)
    z_identity = float(
        np.max(np.linalg.norm(v.z_sum() - Z.values.reshape(v.P.shape), axis=(1, 2)))
    )

    ode = {f"V.{k}": val for k, val in _central_residuals(v, v_rhs(model)).items()}
    v_at_node = lambda t: sample(v.trajectory, t)  # noqa: E731
    ode.update({f"M.{k}": val for k, val in _central_residuals(m, m_rhs(model, v_at_node)).items()})

    symmetry = {
        "P": _symmetry_defect(v.P),
        "Lambda": _symmetry_defect(v.Lambda),
        "Pi1o": _symmetry_defect(m.Pi1o),
        "Pi2o": _symmetry_defect(m.Pi2o),
        "Pi1d": _symmetry_defect(u.Pi1d),
        "Pi2d": _symmetry_defect(u.Pi2d),
        "Pi3d": _symmetry_defect(u.Pi3d),
    }

    vt = v_terminal(model)
    Qf, Gf = model.Qf, model.Gammaf
    v_end, m_end, u_end = v.terminal(), m.terminal(), u.terminal()
    terminal = {f"V.{k}": _max_abs(v_end[k] - vt[k]) for k in vt}
    terminal.update({f"M.{k}": _max_abs(val) for k, val in m_end.items()})
    u_expected = {
        "Pi1d": Qf,
        "Pi2d": Qf @ Gf + Gf.T @ Qf,
        "Pi3d": -vt["Lambda"],
        "Pi4d": vt["Lambda"] - Qf @ Gf - Gf.T @ Qf,
        "Sd": vt["S"] + vt["theta"],
        "thetad": np.zeros(model.n),
        "rd": vt["r"],
    }
    terminal.update({f"U.{k}": _max_abs(u_end[k] - val) for k, val in u_expected.items()})

    H_sym = v.H + np.swapaxes(v.H, 1, 2)
    assembly = {
        "Pi1d": _max_abs(u.Pi1d - v.P),
        "Pi2d": _max_abs(u.Pi2d - (m.Pi1o - H_sym)),
        "Pi3d": _max_abs(u.Pi3d - (m.Pi2o - v.Lambda)),
        "Pi4d": _max_abs(u.Pi4d - (v.Lambda + H_sym)),
        "Sd": _max_abs(u.Sd - (v.S + v.theta)),
        "thetad": _max_abs(u.thetad - m.thetao),
        "rd": _max_abs(u.rd - (v.r + m.ro)),
    }

    min_eig = float(np.min(np.linalg.eigvalsh(0.5 * (v.P + np.swapaxes(v.P, 1, 2)))))

    report = ResidualReport(
        steps=grid.steps,
        z_identity=z_identity,
        ode_residuals=ode,
        symmetry_defects=symmetry,
        terminal_defects=terminal,
        assembly_defects=assembly,
        min_P_eigenvalue=min_eig,
    )
    if report.passed:
        logger.info(f"Identity checks passed (Z identity {z_identity:.3e})")
    else:
        logger.warning(f"Identity checks failed: {sorted(report.failures())}")
    return report
