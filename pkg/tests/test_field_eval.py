"""Tests for pointwise evaluation of V, φ, Ū, δ_μV, M, U and Φ."""

import numpy as np
import pytest

from meanfield_social.core.exceptions import ConfigError
from meanfield_social.lq import (
    EmpiricalMeasure,
    benchmark_value,
    check_fields,
    eval_delta_mu_V,
    eval_M,
    eval_phi,
    eval_Phi,
    eval_U,
    eval_Ubar,
    eval_V,
    eval_V_x,
    representation_value,
)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(key=42))


class TestEmpiricalMeasure:
    """Particle clouds."""

    def test_excluding(self):
        states = np.arange(8.0).reshape(4, 2)
        mu = EmpiricalMeasure.excluding(states, 1)
        assert mu.k == 3
        np.testing.assert_array_equal(mu.mean(), states[[0, 2, 3]].mean(axis=0))

    def test_second_moment_form(self):
        Y = np.array([[1.0, 0.0], [0.0, 2.0]])
        M = np.array([[1.0, 0.5], [0.5, 3.0]])
        mu = EmpiricalMeasure(Y)
        assert mu.second_moment_form(M) == pytest.approx((1.0 + 12.0) / 2.0)

    def test_single_point(self):
        mu = EmpiricalMeasure([1.0, 2.0])
        assert (mu.k, mu.n) == (1, 2)

    def test_rejects_non_finite(self):
        with pytest.raises(ConfigError):
            EmpiricalMeasure([[np.inf, 0.0]])


class TestValueFields:
    """V, Ū and the functional derivative."""

    def test_V_at_horizon_is_terminal_cost(self, lq_model, lq_solution, rng):
        v = lq_solution[0]
        x = rng.standard_normal(2)
        mu = EmpiricalMeasure(rng.standard_normal((6, 2)))
        gap = x - lq_model.Gammaf @ mu.mean() - lq_model.etaf
        assert eval_V(v, lq_model.T, x, mu) == pytest.approx(gap @ lq_model.Qf @ gap, rel=1e-12)

    def test_gradient_matches_finite_difference(self, lq_solution, rng):
        v = lq_solution[0]
        x = rng.standard_normal(2)
        mu = EmpiricalMeasure(rng.standard_normal((4, 2)))
        h = 1e-5
        fd = [
            (eval_V(v, 0.3, x + h * e, mu) - eval_V(v, 0.3, x - h * e, mu)) / (2 * h)
            for e in np.eye(2)
        ]
        np.testing.assert_allclose(eval_V_x(v, 0.3, x, mu), fd, atol=1e-7)

    def test_Ubar_is_mean_of_V(self, lq_solution, rng):
        v = lq_solution[0]
        mu = EmpiricalMeasure(rng.standard_normal((5, 2)))
        expected = np.mean([eval_V(v, 0.4, y, mu) for y in mu.particles])
        assert eval_Ubar(v, 0.4, mu) == pytest.approx(expected, rel=1e-12)

    def test_delta_mu_V_has_zero_mean(self, lq_solution, rng):
        v = lq_solution[0]
        x = rng.standard_normal(2)
        mu = EmpiricalMeasure(rng.standard_normal((7, 2)))
        values = [eval_delta_mu_V(v, 0.2, x, mu, y) for y in mu.particles]
        assert abs(np.mean(values)) < 1e-12

    def test_delta_mu_V_is_directional_derivative(self, lq_solution, rng):
        # d/dε V(x, (1-ε)μ + εδ_y) at ε = 0 equals δ_μV(x, μ; y) − ⟨μ, δ_μV⟩ = δ_μV(y)
        v = lq_solution[0]
        x = rng.standard_normal(2)
        Y = rng.standard_normal((4, 2))
        y = rng.standard_normal(2)
        eps = 1e-6

        def mixed(e):
            # the mixture only enters V through its mean
            mean = (1.0 - e) * Y.mean(axis=0) + e * y
            return eval_V(v, 0.6, x, EmpiricalMeasure(mean))

        fd = (mixed(eps) - mixed(-eps)) / (2 * eps)
        assert eval_delta_mu_V(v, 0.6, x, EmpiricalMeasure(Y), y) == pytest.approx(fd, abs=1e-6)

    def test_dimension_mismatch(self, lq_solution):
        with pytest.raises(ConfigError):
            eval_V(lq_solution[0], 0.0, np.zeros(3), EmpiricalMeasure(np.zeros((2, 2))))


class TestRepresentation:
    """U against V + M + the δ_μV correction."""

    def test_representation_at_random_points(self, lq_solution, rng):
        v, m, u = lq_solution
        worst = 0.0
        for _ in range(1000):
            t = float(rng.uniform(0.0, 1.0))
            x = rng.standard_normal(2)
            mu = EmpiricalMeasure(rng.standard_normal((int(rng.integers(1, 8)), 2)))
            value = eval_U(u, t, x, mu)
            worst = max(worst, abs(value - representation_value(v, m, t, x, mu)) / (1.0 + abs(value)))
        assert worst <= 1e-10

    def test_M_vanishes_at_horizon(self, lq_solution, rng):
        mu = EmpiricalMeasure(rng.standard_normal((3, 2)))
        assert eval_M(lq_solution[1], 1.0, mu) == 0.0

    def test_M_on_point_mass_reduces_to_ro(self, lq_solution):
        m = lq_solution[1]
        assert np.max(np.abs(m.Pi1o + m.Pi2o)) < 1e-10
        assert np.max(np.abs(m.thetao)) < 1e-10
        mu = EmpiricalMeasure(np.tile([0.7, -0.2], (5, 1)))
        assert eval_M(m, 0.0, mu) == pytest.approx(m.ro[0], abs=1e-10)

    def test_benchmark_value(self, lq_solution, rng):
        v, _, u = lq_solution
        X = rng.standard_normal((6, 2))
        mu = EmpiricalMeasure.excluding(X, 0)
        expected = eval_U(u, 0.0, X[0], mu) + 5 * eval_Ubar(v, 0.0, mu)
        assert benchmark_value(u, v, X[0], mu) == pytest.approx(expected, rel=1e-14)


class TestMinimizer:
    """φ minimizes Φ(t, x, ·, μ)."""

    def test_phi_beats_random_controls(self, lq_model, lq_solution, rng):
        v = lq_solution[0]
        x = rng.standard_normal(2)
        mu = EmpiricalMeasure(rng.standard_normal((5, 2)))
        phi = eval_phi(v, lq_model, 0.5, x, mu)
        best = eval_Phi(v, lq_model, 0.5, x, phi, mu)
        for u in rng.normal(scale=3.0, size=(100, 2)):
            assert eval_Phi(v, lq_model, 0.5, x, u, mu) - best >= -1e-9

    def test_excess_is_R_quadratic(self, lq_model, lq_solution, rng):
        v = lq_solution[0]
        x = rng.standard_normal(2)
        mu = EmpiricalMeasure(rng.standard_normal((5, 2)))
        phi = eval_phi(v, lq_model, 0.1, x, mu)
        du = np.array([0.3, -0.7])
        excess = eval_Phi(v, lq_model, 0.1, x, phi + du, mu) - eval_Phi(v, lq_model, 0.1, x, phi, mu)
        assert excess == pytest.approx(du @ lq_model.R @ du, rel=1e-9)

    def test_check_fields_report(self, lq_model, lq_solution, rng):
        report = check_fields(lq_model, *lq_solution, rng, points=20, controls=100)
        assert report.passed, report.to_dict()
        assert report.points == 20
        assert report.min_Phi_excess >= -1e-9
