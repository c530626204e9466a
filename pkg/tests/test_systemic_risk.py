"""Tests for the inter-bank systemic-risk model."""

import numpy as np
import pytest

from meanfield_social.core.exceptions import ConfigError
from meanfield_social.ode import TimeGrid
from meanfield_social.systemic_risk import (
    SrParams,
    SystemicRiskProblem,
    control_direct,
    control_limit,
    control_limit_master_form,
    convergence_report,
    direct_deviation,
    direct_feedback,
    exact_social_value,
    limit_feedback,
    rollout_social_cost,
    solve_direct,
    solve_master,
    solve_master_coupled,
    solve_Pd,
    sr_table,
)

from tests.helpers import sr_params

GRID = TimeGrid(T=1.0, steps=2000)


@pytest.fixture(scope="module")
def master():
    return solve_master(sr_params(), GRID)


@pytest.fixture(scope="module")
def direct():
    return solve_direct(sr_params(), 8, GRID)


class TestSrParams:
    """Parameter validation."""

    def test_convexity(self):
        with pytest.raises(ConfigError) as exc:
            sr_params(q=2.0, eps0=1.0)
        assert any("convexity" in e for e in exc.value.details["errors"])

    def test_rho_range(self):
        with pytest.raises(ConfigError):
            sr_params(rho=1.5)

    def test_zero_terminal_weight_allowed(self):
        assert sr_params(c=0.0).c == 0.0

    def test_volatility_split(self):
        params = sr_params(sigma=0.5, rho=0.6)
        assert params.idiosyncratic_volatility == pytest.approx(0.4)
        assert params.common_volatility == pytest.approx(0.3)

    def test_dict_round_trip(self):
        params = sr_params()
        assert SrParams.from_dict(params.to_dict()) == params


class TestMasterSolution:
    """The master-equation coefficients and their identities."""

    def test_identity_holds(self, master):
        assert master.identity_defect() <= 1e-8

    def test_P_equals_Pd(self, master):
        assert master.pd_defect() <= 1e-10

    def test_terminal_values(self, master):
        end = master.trajectory.terminal
        assert end.tolist() == [1.0, 1.0, -1.0, 0.0]

    def test_coupled_system_keeps_identity(self, master):
        coupled = solve_master_coupled(sr_params(), GRID)
        assert coupled.identity_defect() <= 1e-8
        np.testing.assert_allclose(coupled.trajectory.values, master.trajectory.values, atol=1e-8)

    def test_control_forms_agree(self, master):
        for t in (0.0, 0.37, 0.9):
            assert control_limit(master, t, 0.4, -0.2) == pytest.approx(
                control_limit_master_form(master, t, 0.4, -0.2), abs=1e-10
            )

    def test_stationary_Pd(self):
        Pd = solve_Pd(sr_params(q=1.0, eps0=4.0, c=1.0), TimeGrid(T=1.0, steps=50))
        assert np.max(np.abs(Pd.values - 1.0)) < 1e-14

    def test_dense_Pd_at_nodes(self, master):
        assert master.Pd_at(GRID.times[100]) == pytest.approx(master.Pd[100], abs=1e-14)


class TestDirectSolution:
    """Exact finite-N coefficients."""

    def test_needs_two_agents(self):
        with pytest.raises(ConfigError):
            solve_direct(sr_params(), 1, GRID)

    def test_terminal_values(self, direct):
        pi1, pi2, r = direct.trajectory.terminal
        assert pi1 == pytest.approx(8.0 / 7.0)
        assert pi2 == pytest.approx(-8.0 / 49.0)
        assert r == 0.0

    def test_matrix(self, direct):
        M = direct.matrix(0.0)
        pi1, pi2, _ = direct.coefficients(0.0)
        assert np.allclose(np.diag(M), pi1)
        assert M[0, 1] == pytest.approx(pi2)

    def test_feedback_matches_pointwise_control(self, direct):
        x = np.linspace(-1.0, 1.0, 8)
        u = direct_feedback(direct)(0.25, x)
        for i in range(8):
            assert u[i] == pytest.approx(control_direct(direct, 0.25, x, i), abs=1e-12)

    def test_state_size_checked(self, direct):
        with pytest.raises(ConfigError):
            exact_social_value(direct, np.zeros(3))


class TestNoiselessValues:
    """Deterministic rollouts against the exact social value."""

    X0 = [0.3, -0.5, 1.0, 0.2, -0.1]

    def test_exact_value_matches_rollout(self):
        params = sr_params(sigma=0.0)
        sol = solve_direct(params, 5, GRID)
        rolled = rollout_social_cost(params, direct_feedback(sol), self.X0, GRID)
        assert exact_social_value(sol, self.X0) == pytest.approx(rolled, rel=1e-6)

    def test_direct_beats_limit_law(self):
        params = sr_params(sigma=0.0)
        sol = solve_direct(params, 5, GRID)
        ms = solve_master(params, GRID)
        limit_cost = rollout_social_cost(params, limit_feedback(ms), self.X0, GRID)
        assert limit_cost >= exact_social_value(sol, self.X0) - 1e-9


class TestConvergence:
    """Finite-N coefficients approach the limit at rate 1/N."""

    def test_slopes(self):
        report = convergence_report(sr_params(), [4, 8, 16, 32, 64, 128, 256], GRID)
        assert -1.2 <= report.slope_e1 <= -0.8
        assert -1.2 <= report.slope_e2 <= -0.8
        assert report.e1_monotone
        assert len(report.to_frame()) == 7
        assert report.to_dict()["experiment"] == "systemic-risk-convergence"

    def test_needs_four_sizes(self):
        with pytest.raises(ConfigError):
            convergence_report(sr_params(), [4, 8, 16], GRID)

    def test_sizes_must_increase(self):
        with pytest.raises(ConfigError):
            convergence_report(sr_params(), [4, 16, 8, 32], GRID)


class TestTablesAndProblems:
    """Coefficient tables and closed-loop adapters."""

    def test_table_columns(self, direct, master):
        frame = sr_table(direct, master)
        assert list(frame.columns) == ["t", "pi1", "pi2", "Pd", "P", "Lambda", "H", "r"]
        assert len(frame) == GRID.steps + 1

    def test_table_needs_shared_grid(self, master):
        coarse = solve_direct(sr_params(), 8, TimeGrid(T=1.0, steps=10))
        with pytest.raises(ConfigError):
            sr_table(coarse, master)

    def test_problem_needs_one_solution(self, direct, master):
        with pytest.raises(ConfigError):
            SystemicRiskProblem(sr_params())
        with pytest.raises(ConfigError):
            SystemicRiskProblem(sr_params(), master=master, direct=direct)

    def test_optimal_problem_checks_N(self, direct):
        problem = SystemicRiskProblem.optimal(sr_params(), direct)
        X = np.zeros((2, 4, 1))
        with pytest.raises(ConfigError):
            problem.feedback(0.0, X, X)

    def test_direct_deviation_label(self, direct):
        assert direct_deviation(direct).describe() == "direct-optimal"

    def test_direct_deviation_matches_optimal_feedback(self, direct):
        problem = SystemicRiskProblem.optimal(sr_params(), direct)
        X = np.random.default_rng(0).standard_normal((3, 8, 1))
        xbar = (X.sum(axis=1, keepdims=True) - X) / 7
        expected = problem.feedback(0.5, X, xbar)[:, 0, :]
        got = direct_deviation(direct).feedback(0.5, X)
        np.testing.assert_allclose(got, expected, atol=1e-12)
