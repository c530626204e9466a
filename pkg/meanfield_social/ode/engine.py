"""
Fixed-step integration of matrix/vector ODE systems with terminal conditions.

Every coefficient system in the package is packed into one flat state vector
through a BlockLayout and integrated backward from T with classical RK4.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from ..core.constants import DEFAULT_STEPS
from ..core.exceptions import BlowUpError, ConfigError, OutOfRangeError

logger = logging.getLogger(__name__)

Rhs = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on [0, T]."""

    T: float
    steps: int = DEFAULT_STEPS
    t0: float = 0.0

    def __post_init__(self):
        errors = self._validate_without_exception()
        if errors:
            raise ConfigError(f"TimeGrid validation failed: {'; '.join(errors)}", {"errors": errors})

    def _validate_without_exception(self) -> List[str]:
        errors = []
        if not np.isfinite(self.T) or self.T <= 0:
            errors.append(f"horizon T must be positive, got {self.T}")
        if not isinstance(self.steps, (int, np.integer)) or self.steps < 1:
            errors.append(f"steps must be a positive integer, got {self.steps}")
        if self.t0 != 0.0:
            errors.append("grids start at t0 = 0")
        return errors

    @property
    def h(self) -> float:
        return self.T / self.steps

    @property
    def times(self) -> np.ndarray:
        # linspace pins both endpoints exactly
        return np.linspace(0.0, self.T, self.steps + 1)

    def check_time(self, t: float) -> None:
        slack = 1e-12 * max(1.0, self.T)
        if not (-slack <= t <= self.T + slack):
            raise OutOfRangeError(f"time {t} outside [0, {self.T}]", time=t, horizon=self.T)


@dataclass(frozen=True)
class Trajectory:
    """Flat state vectors stored at every grid point (row k ↔ times[k])."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != self.grid.steps + 1:
            raise ConfigError(
                f"trajectory needs {self.grid.steps + 1} rows, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise BlowUpError("trajectory contains non-finite entries")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    @property
    def terminal(self) -> np.ndarray:
        return self.values[-1]

    @property
    def initial(self) -> np.ndarray:
        return self.values[0]


@dataclass(frozen=True)
class Block:
    """A named coefficient block inside a packed state vector."""

    name: str
    shape: Tuple[int, ...]
    symmetric: bool = False

    @property
    def size(self) -> int:
        return int(np.prod(self.shape)) if self.shape else 1


@dataclass(frozen=True)
class BlockLayout:
    """Row-major packing of matrix, vector and scalar blocks into one vector."""

    blocks: Tuple[Block, ...]
    _slices: Dict[str, slice] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        slices = {}
        offset = 0
        for block in self.blocks:
            if block.name in slices:
                raise ConfigError(f"duplicate block name '{block.name}'")
            slices[block.name] = slice(offset, offset + block.size)
            offset += block.size
        object.__setattr__(self, "_slices", slices)

    @classmethod
    def of(cls, *blocks: Block) -> "BlockLayout":
        return cls(tuple(blocks))

    @property
    def size(self) -> int:
        return sum(b.size for b in self.blocks)

    @property
    def names(self) -> List[str]:
        return [b.name for b in self.blocks]

    def block(self, name: str) -> Block:
        for b in self.blocks:
            if b.name == name:
                return b
        raise KeyError(name)

    def pack(self, **arrays: np.ndarray) -> np.ndarray:
        missing = set(self.names) - set(arrays)
        if missing:
            raise ConfigError(f"missing blocks: {sorted(missing)}")
        vec = np.empty(self.size)
        for b in self.blocks:
            vec[self._slices[b.name]] = np.asarray(arrays[b.name], dtype=float).reshape(-1)
        return vec

    def unpack(self, vec: np.ndarray) -> Dict[str, np.ndarray]:
        out = {}
        for b in self.blocks:
            chunk = vec[self._slices[b.name]]
            out[b.name] = chunk.reshape(b.shape) if b.shape else chunk[0]
        return out

    def series(self, values: np.ndarray, name: str) -> np.ndarray:
        """All grid values of one block, shape (rows, *block.shape)."""
        b = self.block(name)
        return values[:, self._slices[name]].reshape((values.shape[0],) + b.shape)

    def symmetrize(self, vec: np.ndarray) -> np.ndarray:
        out = vec.copy()
        for b in self.blocks:
            if b.symmetric:
                m = out[self._slices[b.name]].reshape(b.shape)
                out[self._slices[b.name]] = (0.5 * (m + m.T)).reshape(-1)
        return out

    @property
    def has_symmetric(self) -> bool:
        return any(b.symmetric for b in self.blocks)

    def column_names(self) -> List[str]:
        """`P_01` style names; indices are joined by `_` once an index needs two digits."""
        names = []
        for b in self.blocks:
            if not b.shape:
                names.append(b.name)
                continue
            sep = "_" if max(b.shape) > 10 else ""
            names.extend(f"{b.name}_{sep.join(str(i) for i in idx)}" for idx in np.ndindex(*b.shape))
        return names


def integrate_terminal(
    rhs: Rhs,
    terminal_state: np.ndarray,
    grid: TimeGrid,
    layout: Optional[BlockLayout] = None,
) -> Trajectory:
    """Integrate dy/dt = rhs(t, y) backward from y(T) = terminal_state.

    Classical RK4 in the reversed time s = T - t. When a layout is given, its
    symmetric blocks are re-symmetrized after every step.

    Args:
        rhs: Right-hand side f(t, y)
        terminal_state: State at t = T
        grid: Integration grid
        layout: Optional layout whose symmetric blocks are projected each step

    Returns:
        Trajectory holding the state at every grid point

    Raises:
        BlowUpError: If an intermediate state becomes non-finite
    """
    y = np.array(terminal_state, dtype=float).reshape(-1)
    if not np.all(np.isfinite(y)):
        raise BlowUpError("terminal state is not finite", time=grid.T)

    times = grid.times
    h = grid.h
    symmetrize = layout.symmetrize if layout is not None and layout.has_symmetric else None
    out = np.empty((grid.steps + 1, y.size))
    out[-1] = y

    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(grid.steps, 0, -1):
            t = times[k]
            t_mid = 0.5 * (times[k] + times[k - 1])
            k1 = rhs(t, y)
            k2 = rhs(t_mid, y - 0.5 * h * k1)
            k3 = rhs(t_mid, y - 0.5 * h * k2)
            k4 = rhs(times[k - 1], y - h * k3)
            y = y - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if symmetrize is not None:
                y = symmetrize(y)
            if not np.all(np.isfinite(y)):
                logger.debug(f"RK4 blow-up between t={times[k - 1]} and t={t}")
                raise BlowUpError(
                    f"ODE solution escaped to infinity at t={times[k - 1]:.6g}",
                    time=float(times[k - 1]),
                )
            out[k - 1] = y

    return Trajectory(grid=grid, values=out)


def integrate_forward(rhs: Rhs, initial_state: np.ndarray, grid: TimeGrid) -> Trajectory:
    """Integrate dy/dt = rhs(t, y) forward from y(0) by time reversal.

    The returned trajectory is indexed by forward time like any other.
    """
    T = grid.T
    reversed_traj = integrate_terminal(lambda s, w: -rhs(T - s, w), initial_state, grid)
    return Trajectory(grid=grid, values=reversed_traj.values[::-1].copy())


def sample(traj: Trajectory, t: float) -> np.ndarray:
    """Linear interpolation of a trajectory at time t (exact at grid points)."""
    grid = traj.grid
    grid.check_time(t)
    times = traj.times
    t = min(max(t, 0.0), grid.T)
    k = int(np.searchsorted(times, t, side="right")) - 1
    k = min(max(k, 0), grid.steps - 1)
    if t == times[k]:
        return traj.values[k].copy()
    if t == times[k + 1]:
        return traj.values[k + 1].copy()
    w = (t - times[k]) / (times[k + 1] - times[k])
    return (1.0 - w) * traj.values[k] + w * traj.values[k + 1]


class HermiteInterpolant:
    """Cubic Hermite dense output of a trajectory whose derivative is known.

    The derivative at each grid point is the ODE right-hand side evaluated on
    the stored state, which keeps half-step lookups fourth-order accurate.
    """

    def __init__(self, traj: Trajectory, rhs: Optional[Rhs] = None, derivatives: Optional[np.ndarray] = None):
        if derivatives is None:
            if rhs is None:
                raise ConfigError("HermiteInterpolant needs rhs or derivatives")
            derivatives = np.array([rhs(t, y) for t, y in zip(traj.times, traj.values)])
        self.trajectory = traj
        self.derivatives = np.asarray(derivatives, dtype=float)
        self._spline = CubicHermiteSpline(traj.times, traj.values, self.derivatives, axis=0)

    def __call__(self, t: float) -> np.ndarray:
        return np.asarray(self._spline(t))

