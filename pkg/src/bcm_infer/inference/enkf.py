"""Ensemble Kalman Filter over latent BCM opinions.

Forecast::

    x_check^k = f(x_hat^k) + eta^k,          eta ~ N(0, s^2 I)

Analysis::

    x_hat^k = x_check^k + K [y - h(x_check^k)] + nu^k

with K = X Y^T (Y Y^T + R)^-1, where X and Y are the state and observation
anomalies scaled by 1/sqrt(N_e - 1). Binary and count observations are used
as real vectors without a link function.
"""

import logging
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.linalg import LinAlgError, LinAlgWarning, solve

from ..constants import Granularity, Method
from ..model.dynamics import drift, observe_batch, pair_index
from ..model.types import ModelParams, ObservationSeries, ObservationShapeError, observation_dim
from .interface import ForecastPath, LatentStateEstimator, Reconstruction

logger = logging.getLogger(__name__)


class FilterError(Exception):
    """Base class for filter failures."""

    pass


class EnsembleSizeError(FilterError):
    """Raised when an ensemble has fewer than two members."""

    pass


class DegenerateEnsembleError(FilterError):
    """Raised when the innovation matrix cannot be inverted."""

    def __init__(self, message: str, condition_number: float):
        super().__init__(f"{message} (condition number {condition_number:.3e})")
        self.condition_number = condition_number


class Perturbation(str, Enum):
    """Where the analysis randomness enters."""

    STATE = "state"  # nu added to the updated state, outside the gain
    OBSERVATIONS = "observations"  # perturbed observations inside the innovation


class AnalysisNoise(str, Enum):
    """Scale of the state perturbation nu."""

    FIXED = "fixed"  # analysis_noise_std
    R_SCALED = "r_scaled"  # obs_noise_std, the square root of the R diagonal


class FilterConfig(BaseModel):
    """EnKF settings."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    ensemble_size: int = Field(100, ge=2, description="Number of members N_e")
    model_noise_std: float = Field(1e-3, ge=0.0, description="Forecast noise std s")
    obs_noise_std: float = Field(0.1, gt=0.0, description="Observation noise std r")
    analysis_noise_std: float = Field(
        1e-3, ge=0.0, description="Std of the state perturbation nu (state variant)"
    )
    inflation: float = Field(1.0, ge=1.0, description="Multiplicative anomaly inflation")
    granularity: Granularity = Granularity.EDGE
    epsilon_assumed: float = Field(0.2, gt=0.0, le=1.0)
    clamp_states: bool = True
    perturbation: Perturbation = Perturbation.STATE
    analysis_noise: AnalysisNoise = AnalysisNoise.FIXED
    seed: int = Field(0, ge=0)


@dataclass(eq=False)
class Ensemble:
    """Candidate opinion states, one row per member."""

    members: np.ndarray  # (N_e, N)
    time: int = 0

    def __post_init__(self) -> None:
        self.members = np.asarray(self.members, dtype=np.float64)
        if self.members.ndim != 2:
            raise ValueError(f"members must be (N_e, N), got {self.members.shape}")
        if self.members.shape[0] < 2:
            raise EnsembleSizeError(f"ensemble needs at least 2 members, got {self.size}")

    @property
    def size(self) -> int:
        return int(self.members.shape[0])

    @property
    def n_agents(self) -> int:
        return int(self.members.shape[1])

    def mean(self) -> np.ndarray:
        return self.members.mean(axis=0)

    def spread(self) -> np.ndarray:
        return self.members.std(axis=0, ddof=1)


@dataclass(eq=False)
class FilterResult:
    """Per-step ensemble statistics of one assimilation run."""

    estimate_series: np.ndarray  # (steps, N) ensemble means
    spread_series: np.ndarray  # (steps, N) ensemble standard deviations
    final_ensemble: Ensemble


def init_ensemble(config: FilterConfig, n_agents: int, rng: np.random.Generator) -> Ensemble:
    """
    Draw N_e members i.i.d. uniform on [0, 1]^N.

    Raises:
        EnsembleSizeError: If the configured ensemble has fewer than two members
    """
    if config.ensemble_size < 2:
        raise EnsembleSizeError(f"ensemble_size must be >= 2, got {config.ensemble_size}")
    if n_agents < 1:
        raise ValueError(f"n_agents must be positive, got {n_agents}")
    return Ensemble(rng.uniform(0.0, 1.0, size=(config.ensemble_size, n_agents)), 0)


def forecast_step(
    ensemble: Ensemble, params: ModelParams, config: FilterConfig, rng: np.random.Generator
) -> Ensemble:
    """Advance every member one BCM step under the assumed epsilon, then add model noise."""
    x = ensemble.members
    nxt = x + drift(x, config.epsilon_assumed, params.mu)
    if config.model_noise_std > 0:
        nxt = nxt + config.model_noise_std * rng.standard_normal(x.shape)
    if config.inflation != 1.0:
        centre = nxt.mean(axis=0)
        nxt = centre + config.inflation * (nxt - centre)
    return Ensemble(nxt, ensemble.time + 1)


def _predicted(ensemble: Ensemble, config: FilterConfig) -> np.ndarray:
    return observe_batch(ensemble.members, config.epsilon_assumed, config.granularity).astype(
        np.float64
    )


def _gain_factors(
    members: np.ndarray, predicted: np.ndarray, obs_noise_std: float
) -> tuple[np.ndarray, np.ndarray]:
    """
    Factor the gain as K = X @ W.

    X (N, N_e) are the scaled state anomalies and W (N_e, m) = Y^T (Y Y^T + R)^-1.
    When m > N_e the push-through identity W = (Y^T Y + R)^-1 Y^T keeps the
    inverted matrix N_e x N_e (R = r^2 I).
    """
    n_members = members.shape[0]
    scale = 1.0 / np.sqrt(n_members - 1)
    x_anom = (members - members.mean(axis=0)).T * scale
    y_anom = (predicted - predicted.mean(axis=0)).T * scale
    m = y_anom.shape[0]
    r2 = obs_noise_std**2

    if m > n_members:
        system = y_anom.T @ y_anom + r2 * np.eye(n_members)
        rhs = y_anom.T
    else:
        system = y_anom @ y_anom.T + r2 * np.eye(m)
        rhs = y_anom

    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", LinAlgWarning)
            solved = solve(system, rhs, assume_a="pos")
    except (LinAlgError, LinAlgWarning) as e:
        raise DegenerateEnsembleError(
            f"Innovation matrix is singular: degenerate ensemble or R too small ({e})",
            float(np.linalg.cond(system)),
        ) from e

    weights = solved if m > n_members else solved.T
    return x_anom, weights


def kalman_gain(forecast: Ensemble, config: FilterConfig) -> np.ndarray:
    """
    Kalman gain K (N x m) of a forecast ensemble.

    Raises:
        EnsembleSizeError: If the ensemble has fewer than two members
        DegenerateEnsembleError: If the innovation matrix is singular
    """
    if forecast.size < 2:
        raise EnsembleSizeError("kalman gain needs at least 2 members")
    x_anom, weights = _gain_factors(
        forecast.members, _predicted(forecast, config), config.obs_noise_std
    )
    return x_anom @ weights


def analysis_step(
    forecast: Ensemble,
    observation: np.ndarray,
    config: FilterConfig,
    rng: np.random.Generator,
) -> Ensemble:
    """
    Correct every member with the observation.

    Raises:
        ObservationShapeError: If the observation does not match the granularity
    """
    y = np.asarray(observation, dtype=np.float64).ravel()
    expected = observation_dim(config.granularity, forecast.n_agents)
    if y.shape[0] != expected:
        raise ObservationShapeError(
            f"{config.granularity.value} observation has length {y.shape[0]}, expected {expected}"
        )

    predicted = _predicted(forecast, config)
    innovations = y[None, :] - predicted
    if config.perturbation is Perturbation.OBSERVATIONS:
        innovations = innovations + config.obs_noise_std * rng.standard_normal(predicted.shape)

    x_anom, weights = _gain_factors(forecast.members, predicted, config.obs_noise_std)
    # (N_e, m) @ (m, N_e) @ (N_e, N): never forms the N x m gain
    updated = forecast.members + (innovations @ weights.T) @ x_anom.T

    if config.perturbation is Perturbation.STATE:
        nu_std = _analysis_noise_std(config)
        if nu_std > 0:
            updated = updated + nu_std * rng.standard_normal(updated.shape)
    if config.clamp_states:
        np.clip(updated, 0.0, 1.0, out=updated)
    return Ensemble(updated, forecast.time)


def _analysis_noise_std(config: FilterConfig) -> float:
    if config.analysis_noise is AnalysisNoise.R_SCALED:
        return config.obs_noise_std
    return config.analysis_noise_std


def assimilate(
    observations: ObservationSeries,
    params: ModelParams,
    config: FilterConfig,
    rng: np.random.Generator,
) -> FilterResult:
    """
    Sequentially assimilate an observation series.

    Step 0 analyses the prior ensemble with y(0); every later step forecasts
    then analyses. The generator is split into independent init, forecast and
    analysis streams.

    Raises:
        ObservationShapeError: If the series granularity differs from the config
    """
    if observations.granularity is not config.granularity:
        raise ObservationShapeError(
            f"series is {observations.granularity.value}, filter expects "
            f"{config.granularity.value}"
        )

    init_rng, forecast_rng, analysis_rng = rng.spawn(3)
    ensemble = init_ensemble(config, params.n_agents, init_rng)

    steps = len(observations)
    if steps == 0:
        return FilterResult(ensemble.mean()[None, :], ensemble.spread()[None, :], ensemble)

    estimates = np.empty((steps, params.n_agents))
    spreads = np.empty((steps, params.n_agents))
    for t in range(steps):
        if t > 0:
            ensemble = forecast_step(ensemble, params, config, forecast_rng)
        ensemble = analysis_step(ensemble, observations.at(t), config, analysis_rng)
        estimates[t] = ensemble.mean()
        spreads[t] = ensemble.spread()

    return FilterResult(estimates, spreads, ensemble)


def ensemble_interaction_probabilities(members: np.ndarray, epsilon: float) -> np.ndarray:
    """Fraction of members in which each pair interacts, shape (E,)."""
    return observe_batch(members, epsilon, Granularity.EDGE).mean(axis=0)


class EnkfEstimator(LatentStateEstimator):
    """Data assimilation with the Ensemble Kalman Filter."""

    method = Method.DA

    def __init__(self, config: FilterConfig):
        self.config = config

    def _rng(self, params: ModelParams) -> np.random.Generator:
        return np.random.default_rng([self.config.seed, params.seed])

    def reconstruct(self, observations: ObservationSeries, params: ModelParams) -> Reconstruction:
        result = assimilate(observations, params, self.config, self._rng(params))
        return Reconstruction(
            method=self.method,
            estimates=result.estimate_series,
            spread=result.spread_series,
            ensemble=result.final_ensemble.members,
            diagnostics={
                "ensemble_size": self.config.ensemble_size,
                "final_mean_spread": float(result.spread_series[-1].mean()),
            },
        )

    def forecast(
        self, reconstruction: Reconstruction, params: ModelParams, steps: int
    ) -> ForecastPath:
        if reconstruction.ensemble is None:
            raise FilterError("DA forecast requires the final ensemble")
        eps = self.config.epsilon_assumed
        members = reconstruction.ensemble.copy()
        mean_state = reconstruction.final_state.copy()

        n_pairs = len(pair_index(params.n_agents)[0])
        probabilities = np.empty((steps, n_pairs))
        states = np.empty((steps + 1, params.n_agents))
        states[0] = mean_state
        for t in range(steps):
            members = members + drift(members, eps, params.mu)
            mean_state = mean_state + drift(mean_state, eps, params.mu)
            probabilities[t] = ensemble_interaction_probabilities(members, eps)
            states[t + 1] = mean_state
        return ForecastPath(states=states, probabilities=probabilities)
