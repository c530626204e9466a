"""Shared fixtures: the bundled 2-dim LQ model and its solved coefficients."""

import numpy as np
import pytest

from meanfield_social.lq import InitialDistribution, solve_all
from meanfield_social.ode import TimeGrid

from tests.helpers import lq_2d_model, sr_params


@pytest.fixture(scope="session")
def lq_model():
    return lq_2d_model()


@pytest.fixture(scope="session")
def fine_grid(lq_model):
    return TimeGrid(T=lq_model.T, steps=2000)


@pytest.fixture(scope="session")
def lq_solution(lq_model, fine_grid):
    """(v, m, u) of the 2-dim fixture on 2000 steps."""
    return solve_all(lq_model, fine_grid)


@pytest.fixture
def gaussian_initial():
    return InitialDistribution.gaussian([0.5, -0.3], 0.1 * np.eye(2))


@pytest.fixture
def default_sr():
    return sr_params()
