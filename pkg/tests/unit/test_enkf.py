"""Unit tests for the Ensemble Kalman Filter."""

import numpy as np
import pytest
from pydantic import ValidationError

from bcm_infer.constants import Granularity
from bcm_infer.inference.enkf import (
    AnalysisNoise,
    DegenerateEnsembleError,
    Ensemble,
    EnkfEstimator,
    EnsembleSizeError,
    FilterConfig,
    FilterError,
    Perturbation,
    analysis_step,
    assimilate,
    ensemble_interaction_probabilities,
    forecast_step,
    init_ensemble,
    kalman_gain,
)
from bcm_infer.inference.interface import Reconstruction
from bcm_infer.model.dynamics import initial_opinions, observe_batch, simulate, step
from bcm_infer.model.types import (
    ModelParams,
    ObservationSeries,
    ObservationShapeError,
    OpinionState,
)


def dense_gain(members: np.ndarray, predicted: np.ndarray, obs_noise_std: float) -> np.ndarray:
    """K = C_xy (C_yy + R)^-1 from explicit sample covariances."""
    n_members = members.shape[0]
    x_anom = members - members.mean(axis=0)
    y_anom = predicted - predicted.mean(axis=0)
    c_xy = x_anom.T @ y_anom / (n_members - 1)
    c_yy = y_anom.T @ y_anom / (n_members - 1)
    r = obs_noise_std**2 * np.eye(predicted.shape[1])
    return c_xy @ np.linalg.inv(c_yy + r)


class TestFilterConfig:
    """Test filter configuration validation."""

    def test_defaults(self):
        """Test the default settings."""
        config = FilterConfig()
        assert config.ensemble_size == 100
        assert config.granularity is Granularity.EDGE
        assert config.perturbation is Perturbation.STATE

    @pytest.mark.parametrize("size", [0, 1])
    def test_ensemble_too_small(self, size):
        """Test that fewer than two members are rejected."""
        with pytest.raises(ValidationError):
            FilterConfig(ensemble_size=size)

    def test_zero_obs_noise_rejected(self):
        """Test that R must be positive."""
        with pytest.raises(ValidationError):
            FilterConfig(obs_noise_std=0.0)

    def test_unknown_field_rejected(self):
        """Test extra='forbid'."""
        with pytest.raises(ValidationError):
            FilterConfig(members=10)


class TestEnsemble:
    """Test the ensemble container."""

    def test_statistics(self):
        """Test mean and sample spread per agent."""
        ensemble = Ensemble(np.array([[0.0, 0.2], [1.0, 0.4]]))
        np.testing.assert_allclose(ensemble.mean(), [0.5, 0.3])
        np.testing.assert_allclose(ensemble.spread(), [np.sqrt(0.5), np.sqrt(0.02)])

    def test_single_member_rejected(self):
        """Test the two-member minimum."""
        with pytest.raises(EnsembleSizeError):
            Ensemble(np.zeros((1, 3)))


class TestInitEnsemble:
    """Test prior ensemble sampling."""

    def test_reproducible(self):
        """Test that a fixed seed draws the same members."""
        config = FilterConfig(ensemble_size=2)
        a = init_ensemble(config, 1, np.random.default_rng(7))
        b = init_ensemble(config, 1, np.random.default_rng(7))
        assert a.members.shape == (2, 1)
        assert np.all((a.members >= 0.0) & (a.members <= 1.0))
        np.testing.assert_array_equal(a.members, b.members)

    def test_uniform_prior_mean(self):
        """Test that a large ensemble centres on 0.5."""
        config = FilterConfig(ensemble_size=1000)
        ensemble = init_ensemble(config, 1, np.random.default_rng(0))
        assert abs(ensemble.mean()[0] - 0.5) < 0.03

    def test_unvalidated_size_rejected(self):
        """Test the size check on configs built without validation."""
        config = FilterConfig.model_construct(ensemble_size=0)
        with pytest.raises(EnsembleSizeError):
            init_ensemble(config, 3, np.random.default_rng(0))


class TestForecastStep:
    """Test the ensemble forecast."""

    def test_identical_members_stay_identical(self, small_params):
        """Test deterministic dynamics without model noise."""
        config = FilterConfig(ensemble_size=4, model_noise_std=0.0, epsilon_assumed=0.3)
        x0 = initial_opinions(small_params).opinions
        ensemble = Ensemble(np.tile(x0, (4, 1)))
        out = forecast_step(ensemble, small_params, config, np.random.default_rng(0))
        np.testing.assert_allclose(out.members, np.tile(out.members[0], (4, 1)), atol=1e-15)
        expected = step(OpinionState(x0), small_params, epsilon=0.3).opinions
        np.testing.assert_allclose(out.members[0], expected, atol=1e-15)
        assert out.time == 1

    def test_zero_dynamics(self, small_params, rng):
        """Test that mu = 0 without noise leaves the ensemble unchanged."""
        params = small_params.model_copy(update={"mu": 0.0})
        config = FilterConfig(ensemble_size=5, model_noise_std=0.0)
        ensemble = Ensemble(rng.uniform(size=(5, 6)))
        out = forecast_step(ensemble, params, config, rng)
        np.testing.assert_array_equal(out.members, ensemble.members)

    def test_noise_variance_growth(self):
        """Test that model noise adds s^2 variance per step."""
        params = ModelParams(epsilon=0.2, mu=0.0, n_agents=2, horizon=1)
        config = FilterConfig(ensemble_size=2000, model_noise_std=0.01)
        gen = np.random.default_rng(3)
        ensemble = Ensemble(np.full((2000, 2), 0.5))
        for _ in range(25):
            ensemble = forecast_step(ensemble, params, config, gen)
        variance = ensemble.members.var(axis=0, ddof=1)
        np.testing.assert_allclose(variance, 25 * 0.01**2, rtol=0.15)

    def test_inflation_scales_anomalies(self, rng):
        """Test multiplicative inflation around the ensemble mean."""
        params = ModelParams(epsilon=0.2, mu=0.0, n_agents=3, horizon=1)
        config = FilterConfig(ensemble_size=4, model_noise_std=0.0, inflation=2.0)
        ensemble = Ensemble(rng.uniform(size=(4, 3)))
        out = forecast_step(ensemble, params, config, rng)
        centre = ensemble.mean()
        np.testing.assert_allclose(out.members - centre, 2.0 * (ensemble.members - centre))


class TestKalmanGain:
    """Test the gain computation against a dense oracle."""

    def test_global_observation_matches_dense(self):
        """Test N=2, N_e=3 with a hand-built ensemble."""
        members = np.array([[0.1, 0.2], [0.4, 0.9], [0.3, 0.35]])
        config = FilterConfig(ensemble_size=3, granularity="global", obs_noise_std=0.5)
        predicted = observe_batch(members, 0.2, Granularity.GLOBAL).astype(float)
        gain = kalman_gain(Ensemble(members), config)
        assert gain.shape == (2, 1)
        np.testing.assert_allclose(gain, dense_gain(members, predicted, 0.5), atol=1e-12)

    def test_subspace_form_matches_dense(self, rng):
        """Test the m > N_e branch on edge observations."""
        members = rng.uniform(size=(4, 6))
        config = FilterConfig(ensemble_size=4, obs_noise_std=0.3, epsilon_assumed=0.3)
        predicted = observe_batch(members, 0.3, Granularity.EDGE).astype(float)
        gain = kalman_gain(Ensemble(members), config)
        assert gain.shape == (6, 15)
        np.testing.assert_allclose(gain, dense_gain(members, predicted, 0.3), atol=1e-10)

    def test_random_instances_match_dense(self):
        """Test 200 random ensembles at every granularity, on both sides of m = N_e."""
        rng = np.random.default_rng(7)
        branches = set()
        for index in range(200):
            n_agents = int(rng.integers(2, 9))
            n_members = int(rng.integers(2, 13))
            granularity = list(Granularity)[index % 3]
            epsilon = float(rng.uniform(0.1, 0.5))
            r = float(rng.uniform(0.1, 1.0))
            if rng.uniform() < 0.5:
                members = rng.uniform(size=(n_members, n_agents))
            else:
                # clustered members, as in a consensus regime
                centre = rng.uniform(0.2, 0.8)
                members = np.clip(centre + 0.1 * rng.standard_normal((n_members, n_agents)), 0, 1)

            config = FilterConfig(
                ensemble_size=n_members,
                granularity=granularity,
                epsilon_assumed=epsilon,
                obs_noise_std=r,
            )
            predicted = observe_batch(members, epsilon, granularity).astype(float)
            branches.add(predicted.shape[1] > n_members)
            gain = kalman_gain(Ensemble(members), config)
            np.testing.assert_allclose(
                gain,
                dense_gain(members, predicted, r),
                rtol=1e-8,
                atol=1e-12,
                err_msg=f"instance {index}: N={n_agents} N_e={n_members} {granularity.value}",
            )
        assert branches == {True, False}

    def test_zero_spread_gives_zero_gain(self):
        """Test that identical members cannot be corrected."""
        members = np.tile([0.2, 0.5, 0.7], (4, 1))
        config = FilterConfig(ensemble_size=4, granularity="node")
        np.testing.assert_array_equal(kalman_gain(Ensemble(members), config), 0.0)

    def test_gain_shrinks_with_obs_noise(self, rng):
        """Test that the gain norm falls as R grows."""
        members = rng.uniform(size=(6, 4))
        norms = [
            np.linalg.norm(
                kalman_gain(Ensemble(members), FilterConfig(ensemble_size=6, obs_noise_std=r))
            )
            for r in (0.1, 1.0, 10.0, 100.0)
        ]
        assert norms == sorted(norms, reverse=True)
        assert norms[-1] < 1e-3

    def test_singular_innovation_matrix(self):
        """Test the degenerate-ensemble error and its diagnostic."""
        members = np.tile([0.2, 0.5], (3, 1))
        config = FilterConfig(ensemble_size=3, granularity="node", obs_noise_std=1e-200)
        with pytest.raises(DegenerateEnsembleError) as exc_info:
            kalman_gain(Ensemble(members), config)
        assert "condition number" in str(exc_info.value)
        assert isinstance(exc_info.value, FilterError)


class TestAnalysisStep:
    """Test the analysis update."""

    def test_zero_innovation_keeps_ensemble(self):
        """Test that members already predicting y are left unchanged."""
        # pairwise distances above epsilon in every member: all edges are 0
        members = np.array([[0.1, 0.5, 0.9], [0.0, 0.4, 0.8], [0.2, 0.55, 1.0]])
        config = FilterConfig(ensemble_size=3, analysis_noise_std=0.0, epsilon_assumed=0.2)
        out = analysis_step(Ensemble(members), np.zeros(3), config, np.random.default_rng(0))
        np.testing.assert_allclose(out.members, members, atol=1e-15)

    def test_posterior_mean_matches_dense(self):
        """Test the state-perturbation update against the dense Kalman update."""
        members = np.array([[0.1, 0.2], [0.4, 0.9], [0.3, 0.35]])
        config = FilterConfig(
            ensemble_size=3, granularity="global", obs_noise_std=0.5, analysis_noise_std=0.0
        )
        predicted = observe_batch(members, 0.2, Granularity.GLOBAL).astype(float)
        gain = dense_gain(members, predicted, 0.5)
        y = np.array([1.0])
        expected = members + (y - predicted) @ gain.T
        out = analysis_step(Ensemble(members), y, config, np.random.default_rng(0))
        np.testing.assert_allclose(out.members, np.clip(expected, 0.0, 1.0), atol=1e-12)

    def test_dimension_mismatch(self, rng):
        """Test that the observation length must match the granularity."""
        config = FilterConfig(ensemble_size=3)
        with pytest.raises(ObservationShapeError):
            analysis_step(Ensemble(rng.uniform(size=(3, 4))), np.zeros(4), config, rng)

    def test_clamping(self, rng):
        """Test that analysed members stay in [0, 1]."""
        config = FilterConfig(ensemble_size=10, granularity="global", obs_noise_std=0.01)
        members = rng.uniform(size=(10, 5))
        out = analysis_step(Ensemble(members), np.array([10.0]), config, rng)
        assert np.all((out.members >= 0.0) & (out.members <= 1.0))

    def test_perturbed_observations_variant(self, rng):
        """Test that the perturbed-observation variant runs and differs from the state variant."""
        members = rng.uniform(size=(6, 4))
        y = observe_batch(rng.uniform(size=4), 0.2, Granularity.EDGE)
        state_cfg = FilterConfig(ensemble_size=6, seed=0)
        obs_cfg = state_cfg.model_copy(update={"perturbation": Perturbation.OBSERVATIONS})
        a = analysis_step(Ensemble(members), y, state_cfg, np.random.default_rng(1))
        b = analysis_step(Ensemble(members), y, obs_cfg, np.random.default_rng(1))
        assert a.members.shape == b.members.shape
        assert not np.allclose(a.members, b.members)

    @pytest.mark.parametrize(
        "mode, expected_std",
        [(AnalysisNoise.FIXED, 0.01), (AnalysisNoise.R_SCALED, 0.05)],
    )
    def test_analysis_noise_scale(self, mode, expected_std):
        """Test the std of nu when the gain is zero."""
        members = np.tile([0.2, 0.5, 0.8], (2000, 1))
        config = FilterConfig(
            ensemble_size=2000,
            granularity="node",
            obs_noise_std=0.05,
            analysis_noise_std=0.01,
            analysis_noise=mode,
            clamp_states=False,
        )
        out = analysis_step(Ensemble(members), np.ones(3), config, np.random.default_rng(3))
        deviation = out.members - members
        assert abs(deviation.mean()) < 5 * expected_std / np.sqrt(deviation.size)
        assert deviation.std() == pytest.approx(expected_std, rel=0.05)

    def test_analysis_noise_ignored_by_observation_variant(self):
        """Test that nu is only drawn in the state variant."""
        members = np.tile([0.2, 0.5, 0.8], (4, 1))
        config = FilterConfig(
            ensemble_size=4,
            granularity="node",
            perturbation=Perturbation.OBSERVATIONS,
            analysis_noise=AnalysisNoise.R_SCALED,
        )
        out = analysis_step(Ensemble(members), np.ones(3), config, np.random.default_rng(3))
        np.testing.assert_allclose(out.members, members, atol=1e-15)


class TestAssimilate:
    """Test sequential assimilation."""

    def test_shapes(self, small_params):
        """Test one estimate and spread row per observed step."""
        trajectory = simulate(initial_opinions(small_params), small_params)
        config = FilterConfig(ensemble_size=8, epsilon_assumed=0.3)
        result = assimilate(
            trajectory.series("edge"), small_params, config, np.random.default_rng(0)
        )
        assert result.estimate_series.shape == (21, 6)
        assert result.spread_series.shape == (21, 6)
        assert result.final_ensemble.members.shape == (8, 6)

    def test_empty_series(self, small_params):
        """Test that no observations return the prior statistics."""
        config = FilterConfig(ensemble_size=8)
        empty = ObservationSeries(Granularity.EDGE, np.zeros((0, 15), dtype=np.uint8))
        result = assimilate(empty, small_params, config, np.random.default_rng(0))
        assert result.estimate_series.shape == (1, 6)
        np.testing.assert_allclose(result.estimate_series[0], result.final_ensemble.mean())

    def test_granularity_mismatch(self, small_params):
        """Test that the series must match the configured granularity."""
        trajectory = simulate(initial_opinions(small_params), small_params)
        config = FilterConfig(ensemble_size=8, granularity="node")
        with pytest.raises(ObservationShapeError):
            assimilate(trajectory.series("edge"), small_params, config, np.random.default_rng(0))

    def test_deterministic(self, small_params):
        """Test identical results from identical generators."""
        trajectory = simulate(initial_opinions(small_params), small_params)
        config = FilterConfig(ensemble_size=8, granularity="node")
        series = trajectory.series("node")
        a = assimilate(series, small_params, config, np.random.default_rng(5))
        b = assimilate(series, small_params, config, np.random.default_rng(5))
        np.testing.assert_array_equal(a.estimate_series, b.estimate_series)

    def test_spread_contracts(self, small_params):
        """Test that assimilating edge data shrinks the ensemble spread below the prior's."""
        trajectory = simulate(initial_opinions(small_params), small_params)
        config = FilterConfig(ensemble_size=20, epsilon_assumed=0.3)
        result = assimilate(
            trajectory.series("edge"), small_params, config, np.random.default_rng(2)
        )
        assert result.spread_series[-1].mean() < np.sqrt(1.0 / 12.0)

    def test_no_information_fixpoint(self, small_params):
        """Test that huge observation noise reproduces the pure forecast ensemble."""
        trajectory = simulate(initial_opinions(small_params), small_params)
        config = FilterConfig(
            ensemble_size=6,
            obs_noise_std=1e9,
            analysis_noise_std=0.0,
            model_noise_std=1e-3,
            clamp_states=False,
        )
        result = assimilate(
            trajectory.series("edge"), small_params, config, np.random.default_rng(4)
        )

        init_rng, forecast_rng, _ = np.random.default_rng(4).spawn(3)
        ensemble = init_ensemble(config, small_params.n_agents, init_rng)
        for _ in range(20):
            ensemble = forecast_step(ensemble, small_params, config, forecast_rng)
        np.testing.assert_allclose(result.final_ensemble.members, ensemble.members, atol=1e-6)

    def test_no_information_fixpoint_with_default_noise(self, small_params):
        """Test that the default nu only jitters members around the pure forecast.

        21 analyses add N(0, 1e-3^2) each, so a member drifts by about 5e-3 and the
        six-member mean by about 2e-3; 0.02 is a loose bound on either.
        """
        trajectory = simulate(initial_opinions(small_params), small_params)
        config = FilterConfig(
            ensemble_size=6, obs_noise_std=1e9, model_noise_std=1e-3, clamp_states=False
        )
        assert config.analysis_noise_std == 1e-3
        result = assimilate(
            trajectory.series("edge"), small_params, config, np.random.default_rng(4)
        )

        init_rng, forecast_rng, _ = np.random.default_rng(4).spawn(3)
        ensemble = init_ensemble(config, small_params.n_agents, init_rng)
        for _ in range(20):
            ensemble = forecast_step(ensemble, small_params, config, forecast_rng)
        difference = result.final_ensemble.members - ensemble.members
        assert np.abs(difference).max() > 1e-4
        np.testing.assert_allclose(result.final_ensemble.mean(), ensemble.mean(), atol=0.02)
        np.testing.assert_allclose(result.final_ensemble.members, ensemble.members, atol=0.05)


class TestEnkfEstimator:
    """Test the estimator interface of the filter."""

    def test_reconstruct_and_forecast(self, small_params, fast_filter):
        """Test shapes and probability bounds of a full run."""
        trajectory = simulate(initial_opinions(small_params), small_params)
        estimator = EnkfEstimator(fast_filter)
        recon = estimator.reconstruct(trajectory.series("edge").window(8), small_params)
        assert recon.estimates.shape == (9, 6)
        assert recon.ensemble.shape == (8, 6)
        assert recon.diagnostics["ensemble_size"] == 8

        path = estimator.forecast(recon, small_params, 5)
        assert path.states.shape == (6, 6)
        assert path.probabilities.shape == (5, 15)
        np.testing.assert_array_equal(path.states[0], recon.final_state)
        assert np.all((path.probabilities >= 0.0) & (path.probabilities <= 1.0))

    def test_forecast_requires_ensemble(self, small_params, fast_filter):
        """Test that a reconstruction without members cannot be forecast."""
        recon = Reconstruction(method="da", estimates=np.full((2, 6), 0.5))
        with pytest.raises(FilterError):
            EnkfEstimator(fast_filter).forecast(recon, small_params, 3)

    def test_interaction_probabilities(self):
        """Test the member fraction per pair."""
        members = np.array([[0.0, 0.1], [0.0, 0.5]])
        np.testing.assert_allclose(ensemble_interaction_probabilities(members, 0.2), [0.5])
