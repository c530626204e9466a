"""Tests for the LQ model container, validation and initial laws."""

import numpy as np
import pytest

from meanfield_social.core.constants import InitialKind
from meanfield_social.core.exceptions import ConfigError, ModelValidationError
from meanfield_social.lq import InitialDistribution, LqModel, sample_initial_states, validate

from tests.helpers import lq_2d_model, scalar_model


class TestLqModel:
    """Construction, derived matrices and serialization."""

    def test_dimensions(self, lq_model):
        assert (lq_model.n, lq_model.n1, lq_model.n2, lq_model.n3) == (2, 2, 2, 1)

    def test_derived_matrices(self, lq_model):
        expected = np.linalg.solve(lq_model.R, lq_model.B.T)
        np.testing.assert_allclose(lq_model.R_inv_BT, expected, atol=1e-13)
        np.testing.assert_allclose(lq_model.K, lq_model.B @ expected, atol=1e-13)
        assert np.array_equal(lq_model.K, lq_model.K.T)

    def test_arrays_are_read_only(self, lq_model):
        with pytest.raises(ValueError):
            lq_model.A[0, 0] = 5.0

    def test_dict_round_trip(self, lq_model):
        again = LqModel.from_dict(lq_model.to_dict())
        for name in ("A", "B", "Q", "Gammaf", "eta"):
            np.testing.assert_array_equal(getattr(again, name), getattr(lq_model, name))
        assert again.T == lq_model.T

    def test_missing_keys(self, lq_model):
        data = lq_model.to_dict()
        del data["Gamma"]
        with pytest.raises(ConfigError) as exc:
            LqModel.from_dict(data)
        assert "Gamma" in exc.value.details["missing"]

    def test_replace(self, lq_model):
        changed = lq_model.replace(T=2.0)
        assert changed.T == 2.0
        assert lq_model.T == 1.0


class TestValidate:
    """validate() classifies every structural violation and never raises."""

    def test_fixture_is_valid(self, lq_model):
        report = validate(lq_model)
        assert report.passed
        assert report.to_dict() == {"passed": True, "violations": []}

    def test_zero_R(self, lq_model):
        report = validate(lq_model.replace(R=np.zeros((2, 2))))
        assert not report.passed
        assert "R not positive definite" in report.violations

    def test_asymmetric_Q(self, lq_model):
        report = validate(lq_model.replace(Q=[[1.0, 0.5], [0.0, 1.0]]))
        assert "Q asymmetric" in report.violations

    def test_indefinite_Qf(self, lq_model):
        report = validate(lq_model.replace(Qf=[[1.0, 0.0], [0.0, -1.0]]))
        assert any(v.startswith("Qf not positive semidefinite") for v in report.violations)

    def test_dimension_mismatch(self, lq_model):
        report = validate(lq_model.replace(G=np.eye(3)))
        assert any(v.startswith("dimension mismatch: G") for v in report.violations)

    def test_non_finite_entries(self, lq_model):
        report = validate(lq_model.replace(eta=[np.nan, 0.0]))
        assert "eta has non-finite entries" in report.violations

    def test_non_positive_horizon(self):
        report = validate(scalar_model(T=-1.0))
        assert not report.passed

    def test_raise_if_failed(self, lq_model):
        report = validate(lq_model.replace(R=np.zeros((2, 2))))
        with pytest.raises(ModelValidationError) as exc:
            report.raise_if_failed()
        assert exc.value.errors == report.violations

    def test_positive_semidefinite_Q_accepted(self):
        assert validate(scalar_model(q=0.0)).passed


class TestInitialDistribution:
    """Initial laws and their sampling."""

    def test_gaussian_needs_covariance(self):
        with pytest.raises(ConfigError):
            InitialDistribution(kind=InitialKind.GAUSSIAN, mean=[0.0, 0.0])

    def test_covariance_must_be_psd(self):
        with pytest.raises(ConfigError):
            InitialDistribution.gaussian([0.0, 0.0], [[1.0, 0.0], [0.0, -1.0]])

    def test_point_mass_sampling(self):
        dist = InitialDistribution.point_mass([1.0, -2.0])
        X = sample_initial_states(dist, 5, np.random.default_rng(0))
        assert X.shape == (5, 2)
        assert np.all(X == [1.0, -2.0])

    def test_uniform_box_stays_inside(self):
        dist = InitialDistribution.uniform_box([0.0, 1.0], [0.5, 2.0])
        X = sample_initial_states(dist, 1000, np.random.default_rng(1))
        assert np.all(np.abs(X[:, 0]) <= 0.5)
        assert np.all(np.abs(X[:, 1] - 1.0) <= 2.0)

    def test_gaussian_moments(self):
        cov = np.array([[1.0, 0.3], [0.3, 0.5]])
        dist = InitialDistribution.gaussian([1.0, -1.0], cov)
        X = sample_initial_states(dist, 40000, np.random.default_rng(2))
        np.testing.assert_allclose(X.mean(axis=0), [1.0, -1.0], atol=0.03)
        np.testing.assert_allclose(np.cov(X.T), cov, atol=0.03)

    def test_singular_covariance(self):
        dist = InitialDistribution.gaussian([0.0, 0.0], [[1.0, 1.0], [1.0, 1.0]])
        X = sample_initial_states(dist, 100, np.random.default_rng(3))
        np.testing.assert_allclose(X[:, 0], X[:, 1], atol=1e-6)

    def test_deterministic_in_stream(self):
        dist = InitialDistribution.gaussian([0.0], [[2.0]])
        a = sample_initial_states(dist, 10, np.random.default_rng(5))
        b = sample_initial_states(dist, 10, np.random.default_rng(5))
        np.testing.assert_array_equal(a, b)

    def test_needs_two_agents(self):
        with pytest.raises(ConfigError):
            sample_initial_states(InitialDistribution.point_mass([0.0]), 1, np.random.default_rng(0))

    def test_second_moment(self):
        assert InitialDistribution.point_mass([3.0, 4.0]).second_moment() == 25.0
        gaussian = InitialDistribution.gaussian([1.0, 0.0], np.diag([0.5, 0.25]))
        assert gaussian.second_moment() == pytest.approx(1.75)
        box = InitialDistribution.uniform_box([0.0], [3.0])
        assert box.second_moment() == pytest.approx(3.0)

    def test_fixture_helper_matches_conftest(self, lq_model):
        np.testing.assert_array_equal(lq_2d_model().A, lq_model.A)
