"""
Closed-loop problems the particle simulator can step.

A problem supplies, for batched states X of shape (paths, N, n) and the
leave-one-out means X̄ of the same shape, the cooperative feedback, the drift,
the running cost and the terminal cost, plus the noise loadings D and D0.
"""

from abc import ABC, abstractmethod

import numpy as np

from ..lq.model import LqModel, validate
from ..lq.synthesis import VCoefficients


class ClosedLoopProblem(ABC):
    """Interface shared by every model the simulator runs."""

    name: str = "problem"

    @property
    @abstractmethod
    def T(self) -> float: ...

    @property
    @abstractmethod
    def n(self) -> int: ...

    @property
    @abstractmethod
    def n1(self) -> int: ...

    @property
    @abstractmethod
    def D(self) -> np.ndarray: ...

    @property
    @abstractmethod
    def D0(self) -> np.ndarray: ...

    @abstractmethod
    def feedback(self, t: float, X: np.ndarray, xbar: np.ndarray) -> np.ndarray:
        """Cooperative control of every agent, shape (paths, N, n1)."""

    @abstractmethod
    def drift(self, t: float, X: np.ndarray, U: np.ndarray, xbar: np.ndarray) -> np.ndarray:
        """Drift of every agent, shape (paths, N, n)."""

    @abstractmethod
    def running_cost(self, t: float, X: np.ndarray, U: np.ndarray, xbar: np.ndarray) -> np.ndarray:
        """Running cost density of every agent, shape (paths, N)."""

    @abstractmethod
    def terminal_cost(self, X: np.ndarray, xbar: np.ndarray) -> np.ndarray:
        """Terminal cost of every agent, shape (paths, N)."""

    @property
    def n2(self) -> int:
        return self.D.shape[1]

    @property
    def n3(self) -> int:
        return self.D0.shape[1]


def _quadratic(Y: np.ndarray, M: np.ndarray) -> np.ndarray:
    return np.einsum("...i,ij,...j->...", Y, M, Y)


class LqProblem(ClosedLoopProblem):
    """The LQ model closed by the cooperative law φ built from V."""

    name = "lq"

    def __init__(self, model: LqModel, v: VCoefficients):
        validate(model).raise_if_failed()
        self.model = model
        self.v = v

    @property
    def T(self) -> float:
        return self.model.T

    @property
    def n(self) -> int:
        return self.model.n

    @property
    def n1(self) -> int:
        return self.model.n1

    @property
    def D(self) -> np.ndarray:
        return self.model.D

    @property
    def D0(self) -> np.ndarray:
        return self.model.D0

    def feedback(self, t: float, X: np.ndarray, xbar: np.ndarray) -> np.ndarray:
        c = self.v.at(t)
        H = c["H"]
        W = c["Lambda"] + H + H.T
        adjoint = X @ c["P"].T + xbar @ W.T + (c["S"] + c["theta"])
        return -adjoint @ self.model.R_inv_BT.T

    def drift(self, t: float, X: np.ndarray, U: np.ndarray, xbar: np.ndarray) -> np.ndarray:
        m = self.model
        return X @ m.A.T + U @ m.B.T + xbar @ m.G.T

    def running_cost(self, t: float, X: np.ndarray, U: np.ndarray, xbar: np.ndarray) -> np.ndarray:
        m = self.model
        gap = X - xbar @ m.Gamma.T - m.eta
        return _quadratic(gap, m.Q) + _quadratic(U, m.R)

    def terminal_cost(self, X: np.ndarray, xbar: np.ndarray) -> np.ndarray:
        m = self.model
        gap = X - xbar @ m.Gammaf.T - m.etaf
        return _quadratic(gap, m.Qf)
