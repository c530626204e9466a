"""
Counter-based Gaussian increments.

Every (seed, lane, path) triple owns an independent Philox stream; lane 0 feeds
the initial states, lane 1 the common noise W⁰ and lane 2 + j agent j's W^j.
Within a stream draws are consumed step by step, so the increment of a given
(seed, path, step, agent) never depends on how paths are split across workers.
"""

from dataclasses import dataclass

import numpy as np

from ..core.exceptions import ConfigError

INITIAL_LANE = 0
COMMON_LANE = 1
AGENT_LANE_OFFSET = 2


@dataclass(frozen=True)
class NoiseBundle:
    """All Brownian increments of one Monte Carlo ensemble, generated on demand."""

    seed: int
    dt: float
    steps: int
    N: int
    n2: int
    n3: int

    def __post_init__(self):
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError(f"seed must fit in 64 unsigned bits, got {self.seed}")
        if self.dt <= 0 or self.steps < 1 or self.N < 1:
            raise ConfigError("noise bundle needs dt > 0, steps >= 1 and N >= 1")

    def stream(self, lane: int, path: int) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=self.seed, counter=[0, 0, lane, path]))

    def initial_rng(self, path: int) -> np.random.Generator:
        return self.stream(INITIAL_LANE, path)

    def common(self, path: int) -> np.ndarray:
        """W⁰ increments of one path, shape (steps, n3)."""
        z = self.stream(COMMON_LANE, path).standard_normal((self.steps, self.n3))
        return np.sqrt(self.dt) * z

    def agent(self, path: int, agent: int) -> np.ndarray:
        """W^agent increments of one path, shape (steps, n2)."""
        z = self.stream(AGENT_LANE_OFFSET + agent, path).standard_normal((self.steps, self.n2))
        return np.sqrt(self.dt) * z

    def idiosyncratic(self, path: int) -> np.ndarray:
        """Increments of every agent of one path, shape (steps, N, n2)."""
        return np.stack([self.agent(path, j) for j in range(self.N)], axis=1)
