"""Tests for the N-agent particle simulator."""

import logging

import numpy as np
import pandas as pd
import pytest

from meanfield_social.core.exceptions import BlowUpError, ConfigError
from meanfield_social.lq import InitialDistribution, sample_initial_states, solve_all
from meanfield_social.ode import TimeGrid
from meanfield_social.reporting import dumps_report
from meanfield_social.simulation import (
    Deviation,
    LqProblem,
    NoiseBundle,
    SimConfig,
    mean_and_stderr,
    moment_audit,
    paired_simulate,
    simulate,
)
from meanfield_social.simulation import simulator as simulator_module
from meanfield_social.systemic_risk import (
    SystemicRiskProblem,
    limit_feedback,
    rollout_social_cost,
    solve_direct,
    solve_master,
)

from tests.helpers import LinearGrowthProblem, nested_noise, relabelled_noise, sr_params


@pytest.fixture
def lq_problem(lq_model, lq_solution):
    return LqProblem(lq_model, lq_solution[0])


@pytest.fixture
def small_cfg(gaussian_initial):
    return SimConfig(N=4, paths=70, dt_sim=0.05, seed=9, initial=gaussian_initial)


class TestSimConfig:
    """Validation of Monte Carlo settings."""

    def test_needs_two_agents(self, gaussian_initial):
        with pytest.raises(ConfigError):
            SimConfig(N=1, paths=10, dt_sim=0.1, seed=0, initial=gaussian_initial)

    def test_steps(self, small_cfg):
        assert small_cfg.steps_for(1.0) == 20

    def test_dt_must_divide_horizon(self, small_cfg):
        with pytest.raises(ConfigError):
            small_cfg.with_changes(dt_sim=0.03).steps_for(1.0)
        with pytest.raises(ConfigError):
            small_cfg.with_changes(dt_sim=2.0).steps_for(1.0)

    def test_with_changes(self, small_cfg):
        changed = small_cfg.with_changes(N=16)
        assert changed.N == 16
        assert changed.seed == small_cfg.seed


class TestNoiseBundle:
    """Counter-based increments."""

    def setup_method(self):
        self.noise = NoiseBundle(seed=123, dt=0.01, steps=50, N=3, n2=2, n3=1)

    def test_reproducible(self):
        np.testing.assert_array_equal(self.noise.common(4), self.noise.common(4))

    def test_paths_differ(self):
        assert not np.array_equal(self.noise.common(0), self.noise.common(1))

    def test_agent_lanes(self):
        stacked = self.noise.idiosyncratic(2)
        assert stacked.shape == (50, 3, 2)
        np.testing.assert_array_equal(stacked[:, 1], self.noise.agent(2, 1))

    def test_increment_variance(self):
        noise = NoiseBundle(seed=5, dt=0.01, steps=20000, N=2, n2=1, n3=1)
        assert np.var(noise.common(0)) == pytest.approx(0.01, rel=0.05)

    def test_seed_range(self):
        with pytest.raises(ConfigError):
            NoiseBundle(seed=2**64, dt=0.1, steps=1, N=2, n2=1, n3=1)


class TestSimulate:
    """Euler–Maruyama closed loop."""

    def test_report_shapes(self, lq_problem, small_cfg):
        report = simulate(lq_problem, small_cfg)
        assert report.per_path.shape == (70,)
        assert report.per_agent_mean.shape == (4,)
        assert report.second_moments.shape == (21, 4)
        assert report.per_path.sum() / 70 == pytest.approx(report.mean)
        assert set(report.to_dict()) >= {"mean", "stderr", "N", "paths", "seed", "deviation"}

    def test_thread_count_never_changes_results(self, lq_problem, small_cfg, monkeypatch):
        single = simulate(lq_problem, small_cfg.with_changes(threads=1))
        many = simulate(lq_problem, small_cfg.with_changes(threads=4))
        np.testing.assert_array_equal(single.per_path, many.per_path)
        monkeypatch.setenv("MEANFIELD_THREADS", "3")
        from_env = simulate(lq_problem, small_cfg)
        np.testing.assert_array_equal(single.per_path, from_env.per_path)

    def test_emitted_report_bytes_do_not_depend_on_threads(self, lq_problem, small_cfg):
        texts = [
            dumps_report(simulate(lq_problem, small_cfg.with_changes(threads=k), Deviation.scaled(0.5)).to_dict())
            for k in (1, 4)
        ]
        assert texts[0] == texts[1]

    def test_same_seed_same_result(self, lq_problem, small_cfg):
        a = simulate(lq_problem, small_cfg)
        b = simulate(lq_problem, small_cfg)
        assert a.mean == b.mean

    def test_seed_changes_result(self, lq_problem, small_cfg):
        a = simulate(lq_problem, small_cfg)
        b = simulate(lq_problem, small_cfg.with_changes(seed=10))
        assert a.mean != b.mean

    def test_initial_dimension_mismatch(self, lq_problem, small_cfg):
        cfg = small_cfg.with_changes(initial=InitialDistribution.point_mass([0.0]))
        with pytest.raises(ConfigError):
            simulate(lq_problem, cfg)

    def test_blow_up_names_path_and_step(self):
        cfg = SimConfig(N=2, paths=3, dt_sim=0.01, seed=0, initial=InitialDistribution.point_mass([1.0]))
        with pytest.raises(BlowUpError) as exc:
            simulate(LinearGrowthProblem(rate=50.0), cfg)
        assert exc.value.path == 0
        assert exc.value.step == 69

    def test_moment_audit_warns(self, caplog):
        cfg = SimConfig(N=2, paths=2, dt_sim=0.01, seed=0, initial=InitialDistribution.point_mass([1.0]))
        with caplog.at_level(logging.WARNING):
            report = simulate(LinearGrowthProblem(rate=10.0), cfg)
        assert moment_audit(report) == pytest.approx(1.1**200, rel=1e-9)
        assert "Second moment" in caplog.text

    def test_noiseless_limit_law_matches_rollout(self):
        params = sr_params(sigma=0.0)
        master = solve_master(params, TimeGrid(T=1.0, steps=2000))
        cfg = SimConfig(
            N=5, paths=1, dt_sim=0.001, seed=3, initial=InitialDistribution.uniform_box([0.0], [1.0])
        )
        report = simulate(SystemicRiskProblem.limit(params, master), cfg)
        noise = NoiseBundle(cfg.seed, 0.001, 1000, 5, 1, 1)
        x0 = sample_initial_states(cfg.initial, 5, noise.initial_rng(0)).reshape(-1)
        exact = rollout_social_cost(params, limit_feedback(master), x0, TimeGrid(T=1.0, steps=2000))
        assert report.mean == pytest.approx(exact, rel=1e-2)

    def test_pure_common_noise_keeps_agents_together(self):
        params = sr_params(sigma=0.5, rho=1.0)
        master = solve_master(params, TimeGrid(T=1.0, steps=200))
        cfg = SimConfig(N=3, paths=4, dt_sim=0.01, seed=1, initial=InitialDistribution.point_mass([0.2]))
        report = simulate(SystemicRiskProblem.limit(params, master), cfg)
        assert np.max(np.abs(report.per_path)) < 1e-20
        assert report.max_second_moment > 0.04

    def test_exact_law_matches_closed_form_value(self):
        params = sr_params()
        sol = solve_direct(params, 2, TimeGrid(T=1.0, steps=2000))
        cfg = SimConfig(
            N=2, paths=512, dt_sim=0.005, seed=17, initial=InitialDistribution.gaussian([0.0], [[1.0]])
        )
        report = simulate(SystemicRiskProblem.optimal(params, sol), cfg)
        pi1, _, r0 = sol.trajectory.initial
        # E[xᵀ𝐏(0)x] + r(0) for independent standard normal states
        expected = 2.0 * pi1 + r0
        assert abs(report.mean - expected) <= 3.0 * report.stderr


class TestExchangeability:
    """Relabelling agents 2…N together with their noise lanes."""

    ORDER = [0, 3, 1, 4, 2]

    @pytest.mark.parametrize("dev", [Deviation.none(), Deviation.scaled(0.5)], ids=["none", "scaled"])
    def test_relabelled_agents_give_same_costs(self, lq_problem, gaussian_initial, monkeypatch, dev):
        cfg = SimConfig(N=5, paths=40, dt_sim=0.05, seed=13, initial=gaussian_initial)
        base = simulate(lq_problem, cfg, dev)

        draw = simulator_module.sample_initial_states
        monkeypatch.setattr(
            simulator_module, "sample_initial_states", lambda law, N, rng: draw(law, N, rng)[self.ORDER]
        )
        monkeypatch.setattr(simulator_module, "NoiseBundle", relabelled_noise(self.ORDER))
        relabelled = simulate(lq_problem, cfg, dev)

        np.testing.assert_allclose(relabelled.per_path, base.per_path, rtol=0, atol=1e-10)
        np.testing.assert_allclose(relabelled.per_agent_mean, base.per_agent_mean[self.ORDER], rtol=0, atol=1e-10)


class TestTimeStepRefinement:
    """Euler–Maruyama is first order in dt_sim."""

    def test_noiseless_differences_halve(self, lq_model):
        model = lq_model.replace(D=np.zeros((2, 2)), D0=np.zeros((2, 1)))
        v, _, _ = solve_all(model, TimeGrid(T=model.T, steps=2000))
        cfg = SimConfig(N=4, paths=1, dt_sim=0.01, seed=0, initial=InitialDistribution.point_mass([0.5, -0.3]))
        J = [simulate(LqProblem(model, v), cfg.with_changes(dt_sim=dt)).mean for dt in (0.01, 0.005, 0.0025)]
        ratio = (J[0] - J[1]) / (J[1] - J[2])
        assert 1.7 <= ratio <= 2.3

    def test_noisy_change_is_order_dt(self, lq_problem, gaussian_initial, monkeypatch):
        # every dt_sim below sees the same Brownian paths
        monkeypatch.setattr(simulator_module, "NoiseBundle", nested_noise(80))
        cfg = SimConfig(N=4, paths=128, dt_sim=0.05, seed=21, initial=gaussian_initial)
        J = [simulate(lq_problem, cfg.with_changes(dt_sim=dt)).mean for dt in (0.05, 0.025, 0.0125)]
        coarse_change = abs(J[0] - J[1])
        fine_change = abs(J[1] - J[2])
        assert coarse_change <= 2.0 * cfg.N * 0.05
        assert fine_change <= 2.0 * cfg.N * 0.025
        assert fine_change < coarse_change

    def test_nested_noise_sums_fine_increments(self):
        noise_cls = nested_noise(8)
        coarse = noise_cls(seed=3, dt=0.25, steps=4, N=2, n2=1, n3=1)
        fine = noise_cls(seed=3, dt=0.125, steps=8, N=2, n2=1, n3=1)
        np.testing.assert_allclose(coarse.common(0), fine.common(0).reshape(4, 2, 1).sum(axis=1))
        np.testing.assert_allclose(coarse.agent(1, 1), fine.agent(1, 1).reshape(4, 2, 1).sum(axis=1))


class TestMomentAudit:
    """Second-moment audit of simulated states."""

    def test_static_point_mass(self):
        cfg = SimConfig(N=3, paths=4, dt_sim=0.1, seed=0, initial=InitialDistribution.point_mass([3.0, 4.0]))
        report = simulate(LinearGrowthProblem(rate=0.0, n=2), cfg)
        assert moment_audit(report) == 25.0

    def test_bounded_uniformly_in_N(self, lq_problem, gaussian_initial):
        audits = []
        for N in (8, 16, 32, 64):
            cfg = SimConfig(N=N, paths=64, dt_sim=0.05, seed=5, initial=gaussian_initial)
            audits.append(moment_audit(simulate(lq_problem, cfg)))
        assert max(audits) <= 2.0 * min(audits)


class TestDeviations:
    """Agent-0 deviations on common random numbers."""

    def test_baseline_pairing_is_exact(self, lq_problem, small_cfg):
        paired = paired_simulate(lq_problem, small_cfg, Deviation.none())
        assert np.all(paired.differences == 0.0)
        assert paired.stderr_difference == 0.0

    def test_unit_scale_reproduces_baseline(self, lq_problem, small_cfg):
        base = simulate(lq_problem, small_cfg)
        scaled = simulate(lq_problem, small_cfg, Deviation.scaled(1.0))
        np.testing.assert_array_equal(base.per_path, scaled.per_path)

    def test_zero_control_has_no_energy(self, lq_problem, small_cfg):
        report = simulate(lq_problem, small_cfg, Deviation.zero_control())
        assert np.all(report.control_energy == 0.0)

    def test_custom_feedback_is_batched(self, lq_problem, small_cfg):
        def brake(t, X):
            return -X[:, 0, :]

        report = simulate(lq_problem, small_cfg, Deviation.custom(brake, label="brake"))
        assert report.deviation == "brake"
        assert np.all(report.control_energy > 0.0)

    def test_constant_needs_matching_dimension(self, lq_problem, small_cfg):
        with pytest.raises(ConfigError):
            simulate(lq_problem, small_cfg, Deviation.constant_control([0.1, 0.1, 0.1]))

    def test_descriptions(self):
        assert Deviation.none().describe() == "none"
        assert Deviation.zero_control().describe() == "zero-control"
        assert Deviation.scaled(0.5).describe() == "scaled(0.5)"
        assert Deviation.constant_control([0.1, 0.2]).describe() == "constant(0.1,0.2)"


class TestPathDump:
    """CSV dump of simulated paths."""

    def test_dump_rows_and_columns(self, lq_problem, gaussian_initial, tmp_path):
        target = tmp_path / "paths.csv"
        cfg = SimConfig(N=2, paths=3, dt_sim=0.1, seed=4, initial=gaussian_initial, dump_path=str(target))
        simulate(lq_problem, cfg)
        frame = pd.read_csv(target)
        assert len(frame) == 2 * 11 * 3
        assert list(frame.columns) == ["path", "t", "agent", "state_0", "state_1", "control_0", "control_1"]
        assert frame["control_0"].isna().sum() == 2 * 3

    def test_dump_size_guard(self, lq_problem, gaussian_initial, tmp_path):
        cfg = SimConfig(
            N=100, paths=101, dt_sim=0.001, seed=4, initial=gaussian_initial, dump_path=str(tmp_path / "x.csv")
        )
        with pytest.raises(ConfigError):
            simulate(lq_problem, cfg)


class TestStatistics:
    """Monte Carlo summaries."""

    def test_mean_and_stderr(self):
        assert mean_and_stderr(np.array([4.0])) == (4.0, 0.0)
        mean, stderr = mean_and_stderr(np.array([1.0, 2.0, 3.0]))
        assert mean == 2.0
        assert stderr == pytest.approx(1.0 / np.sqrt(3.0))
