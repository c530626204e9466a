"""Model builders and small closed loops shared by the test modules."""

import json
from pathlib import Path
from typing import Any, Dict, Sequence, Type

import numpy as np

from meanfield_social.lq import LqModel
from meanfield_social.simulation import ClosedLoopProblem, NoiseBundle
from meanfield_social.simulation.noise import AGENT_LANE_OFFSET, COMMON_LANE
from meanfield_social.systemic_risk import SrParams

FIXTURES_DIR = Path(__file__).resolve().parent.parent / "meanfield_social" / "fixtures"
LQ_FIXTURE = FIXTURES_DIR / "lq_2d.json"
SR_FIXTURE = FIXTURES_DIR / "systemic_risk.json"


def load_fixture(path: Path) -> Dict[str, Any]:
    return json.loads(path.read_text())


def lq_2d_model() -> LqModel:
    model = dict(load_fixture(LQ_FIXTURE)["model"])
    model.pop("kind")
    return LqModel.from_dict(model)


def scalar_model(a=0.0, b=1.0, q=1.0, r=1.0, qf=0.0, T=1.0, **changes) -> LqModel:
    """One-dimensional model; with the defaults P(t) = tanh(T - t)."""
    data = dict(
        A=[[a]],
        B=[[b]],
        G=[[0.0]],
        D=[[0.0]],
        D0=[[0.0]],
        Q=[[q]],
        R=[[r]],
        Gamma=[[0.0]],
        eta=[0.0],
        Qf=[[qf]],
        Gammaf=[[0.0]],
        etaf=[0.0],
        T=T,
    )
    data.update(changes)
    return LqModel(**data)


def sr_params(**changes) -> SrParams:
    data = dict(sigma=0.2, rho=0.5, q=1.0, eps0=2.0, c=1.0, T=1.0)
    data.update(changes)
    return SrParams(**data)


class LinearGrowthProblem(ClosedLoopProblem):
    """dX = rate·X dt, zero control and zero cost; used to provoke blow-ups."""

    name = "linear-growth"

    def __init__(self, rate: float, T: float = 1.0, n: int = 1):
        self.rate = rate
        self._T = T
        self._n = n

    @property
    def T(self) -> float:
        return self._T

    @property
    def n(self) -> int:
        return self._n

    @property
    def n1(self) -> int:
        return 1

    @property
    def D(self) -> np.ndarray:
        return np.zeros((self._n, 1))

    @property
    def D0(self) -> np.ndarray:
        return np.zeros((self._n, 1))

    def feedback(self, t, X, xbar):
        return np.zeros(X.shape[:2] + (1,))

    def drift(self, t, X, U, xbar):
        return self.rate * X

    def running_cost(self, t, X, U, xbar):
        return np.zeros(X.shape[:2])

    def terminal_cost(self, X, xbar):
        return np.zeros(X.shape[:2])


def nested_noise(finest_steps: int) -> Type[NoiseBundle]:
    """NoiseBundle whose increments are sums of one fixed fine Brownian path.

    Any step count dividing `finest_steps` sees the same W⁰ and W^j, so runs at
    different dt_sim share their randomness.
    """

    class NestedNoise(NoiseBundle):
        def _coarsened(self, lane: int, path: int, width: int) -> np.ndarray:
            if finest_steps % self.steps:
                raise ValueError(f"{self.steps} steps do not divide {finest_steps}")
            fine_dt = self.dt * self.steps / finest_steps
            z = self.stream(lane, path).standard_normal((finest_steps, width))
            fine = np.sqrt(fine_dt) * z
            return fine.reshape(self.steps, finest_steps // self.steps, width).sum(axis=1)

        def common(self, path: int) -> np.ndarray:
            return self._coarsened(COMMON_LANE, path, self.n3)

        def agent(self, path: int, agent: int) -> np.ndarray:
            return self._coarsened(AGENT_LANE_OFFSET + agent, path, self.n2)

    return NestedNoise


def relabelled_noise(order: Sequence[int]) -> Type[NoiseBundle]:
    """NoiseBundle handing agent k the idiosyncratic lane of agent order[k]."""
    order = list(order)

    class RelabelledNoise(NoiseBundle):
        def idiosyncratic(self, path: int) -> np.ndarray:
            return super().idiosyncratic(path)[:, order]

    return RelabelledNoise
