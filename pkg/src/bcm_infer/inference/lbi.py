"""Likelihood-based inference of initial opinions.

The edge observations y_ij(t) are modelled as Bernoulli draws with logits
``s_ij = k * (eps - |x_i - x_j|)`` evaluated on a deterministic rollout of the
model from x(0). The mean binary cross-entropy is minimised over x(0) with Adam
and the gradient is obtained by a reverse sweep through the rollout, holding
each step's interaction matrix fixed.

All restarts are optimised together as rows of one (R, N) batch.
"""

import logging
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.special import expit, logit

from ..constants import Granularity, Method
from ..model.dynamics import adjacency, observe_batch, pair_index
from ..model.types import ModelParams, ObservationSeries, ObservationShapeError, OpinionState
from ..utils.rng import spawn
from .adam import AdamOptimizer
from .interface import ForecastPath, LatentStateEstimator, Reconstruction

logger = logging.getLogger(__name__)


class InferenceAbortedError(Exception):
    """Raised when every restart hit a non-finite loss."""

    pass


class LbiConfig(BaseModel):
    """Settings of the gradient-based reconstruction."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    epsilon_assumed: float = Field(0.2, gt=0.0, le=1.0)
    mu: float = Field(1e-4, ge=0.0, le=0.5)
    sharpness: float = Field(50.0, gt=0.0, description="Logit scale k")
    learning_rate: float = Field(0.05, gt=0.0)
    iterations: int = Field(2000, ge=1)
    restarts: int = Field(5, ge=1)
    weight_decay: float = Field(0.0, ge=0.0, description="Pull of x0 towards 0.5")
    seed: int = Field(0, ge=0)
    horizon_train: int = Field(250, ge=0)
    beta1: float = Field(0.9, ge=0.0, lt=1.0)
    beta2: float = Field(0.999, ge=0.0, lt=1.0)
    init_low: float = Field(0.01, gt=0.0, lt=1.0)
    init_high: float = Field(0.99, gt=0.0, lt=1.0)

    @model_validator(mode="after")
    def _check_init_range(self) -> "LbiConfig":
        if self.init_low >= self.init_high:
            raise ValueError("init_low must be below init_high")
        return self


@dataclass(eq=False)
class RolloutTape:
    """
    Forward pass of a batch of rollouts.

    ``states`` has shape (T+1, R, N). The interaction matrix of each forward
    step is kept as bit-packed upper-triangle pair indicators, shape
    (T, R, ceil(E/8)); ``coefficients`` holds 1 - mu * deg(t), shape (T, R, N).
    """

    states: np.ndarray
    packed_adjacency: np.ndarray
    coefficients: np.ndarray
    epsilon: float
    mu: float

    @property
    def horizon(self) -> int:
        return int(self.states.shape[0] - 1)

    @property
    def batch_size(self) -> int:
        return int(self.states.shape[1])

    @property
    def n_agents(self) -> int:
        return int(self.states.shape[2])

    def pair_indicators(self, t: int) -> np.ndarray:
        """Boolean (R, E) interaction indicators of forward step t."""
        n_pairs = self.n_agents * (self.n_agents - 1) // 2
        return np.unpackbits(self.packed_adjacency[t], axis=-1, count=n_pairs).astype(bool)

    def adjacency(self, t: int) -> np.ndarray:
        """Dense symmetric (R, N, N) float matrix A(t) with unit diagonal."""
        rows, cols = pair_index(self.n_agents)
        bits = self.pair_indicators(t)
        a = np.zeros((self.batch_size, self.n_agents, self.n_agents))
        a[:, rows, cols] = bits
        a[:, cols, rows] = bits
        idx = np.arange(self.n_agents)
        a[:, idx, idx] = 1.0
        return a

    @property
    def trajectory(self) -> np.ndarray:
        """States (T+1, N) of a single-restart tape."""
        if self.batch_size != 1:
            raise ValueError(f"tape holds {self.batch_size} rollouts")
        return self.states[:, 0, :]


@dataclass(eq=False)
class LbiResult:
    """Outcome of :func:`infer`."""

    x0_estimate: OpinionState
    trajectory: np.ndarray  # (T_train + 1, N)
    loss_history: np.ndarray  # per-iteration loss of the chosen restart
    best_restart: int
    restart_losses: list[Optional[float]] = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def final_loss(self) -> float:
        return float(self.restart_losses[self.best_restart])


@lru_cache(maxsize=8)
def _incidence(n_agents: int) -> np.ndarray:
    """(E, N) matrix with +1 at column i and -1 at column j of pair (i, j)."""
    rows, cols = pair_index(n_agents)
    b = np.zeros((len(rows), n_agents))
    k = np.arange(len(rows))
    b[k, rows] = 1.0
    b[k, cols] = -1.0
    b.setflags(write=False)
    return b


def _rollout_batch(x0: np.ndarray, epsilon: float, mu: float, horizon: int) -> RolloutTape:
    n_batch, n = x0.shape
    rows, cols = pair_index(n)
    n_bytes = (len(rows) + 7) // 8
    states = np.empty((horizon + 1, n_batch, n))
    packed = np.empty((horizon, n_batch, n_bytes), dtype=np.uint8)
    coefficients = np.empty((horizon, n_batch, n))

    x = np.array(x0, dtype=np.float64)
    states[0] = x
    for t in range(horizon):
        a = adjacency(x, epsilon)
        packed[t] = np.packbits(a[:, rows, cols], axis=-1)
        af = a.astype(np.float64)
        deg = af.sum(axis=-1)
        coefficients[t] = 1.0 - mu * deg
        # same evaluation order as dynamics.drift
        pulled = np.matmul(af, x[..., None])[..., 0]
        x = x + mu * (pulled - deg * x)
        states[t + 1] = x

    return RolloutTape(states, packed, coefficients, epsilon, mu)


def rollout(x0: OpinionState, config: LbiConfig) -> RolloutTape:
    """
    Deterministic rollout x(t+1) = mu A(t) x(t) + (1 - mu deg(t)) * x(t).

    Matches the noise-free model step; no clamping is applied, which is exact
    whenever mu * N <= 1 keeps every update a convex combination.
    """
    x = np.asarray(x0.opinions, dtype=np.float64)
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("initial opinions must lie in [0, 1]")
    return _rollout_batch(x[None, :], config.epsilon_assumed, config.mu, config.horizon_train)


def interaction_logits(state: OpinionState, config: LbiConfig) -> np.ndarray:
    """Logits s_ij = k * (eps - |x_i - x_j|) over pairs i<j."""
    diff = _incidence(state.n_agents) @ state.opinions
    return config.sharpness * (config.epsilon_assumed - np.abs(diff))


def _edge_targets(observations: ObservationSeries, steps: int, n_agents: int) -> np.ndarray:
    if observations.granularity is not Granularity.EDGE:
        raise ObservationShapeError(
            f"likelihood inference needs edge observations, got {observations.granularity.value}"
        )
    n_pairs = n_agents * (n_agents - 1) // 2
    if observations.dim != n_pairs:
        raise ObservationShapeError(
            f"edge observations have {observations.dim} pairs, expected {n_pairs}"
        )
    if len(observations) < steps:
        raise ObservationShapeError(
            f"need observations for {steps} steps, got {len(observations)}"
        )
    return observations.values[:steps].astype(np.float64)


def _batch_loss_and_grad(
    tape: RolloutTape,
    targets: np.ndarray,
    config: LbiConfig,
    with_grad: bool = True,
) -> tuple[np.ndarray, Optional[np.ndarray]]:
    """
    Loss per rollout (R,) and, optionally, dL/dx0 (R, N).

    The adjoint runs backwards from t = T::

        lam_T = g_T
        lam_t = mu A(t) lam_{t+1} + (1 - mu deg(t)) * lam_{t+1} + g_t

    where g_t is the direct loss sensitivity to x(t).
    """
    b = _incidence(tape.n_agents)
    k = config.sharpness
    steps = tape.horizon + 1
    n_pairs = b.shape[0]

    # (T+1, R, E)
    diff = tape.states @ b.T
    s = k * (config.epsilon_assumed - np.abs(diff))
    y = targets[:, None, :]
    bce = np.logaddexp(0.0, s) - y * s
    x0 = tape.states[0]
    losses = bce.mean(axis=(0, 2)) + config.weight_decay * np.sum((x0 - 0.5) ** 2, axis=-1)
    if not with_grad:
        return losses, None

    # direct sensitivity of each step's loss to x(t)
    dl_ds = (expit(s) - y) / (steps * n_pairs)
    direct = (-k * dl_ds * np.sign(diff)) @ b

    lam = direct[-1].copy()
    for t in range(tape.horizon - 1, -1, -1):
        a = tape.adjacency(t)
        lam = tape.mu * np.matmul(a, lam[..., None])[..., 0] + tape.coefficients[t] * lam
        lam += direct[t]

    grad = lam + 2.0 * config.weight_decay * (x0 - 0.5)
    return losses, grad


def loss(tape: RolloutTape, observations: ObservationSeries, config: LbiConfig) -> float:
    """Mean binary cross-entropy of a single rollout plus the weight-decay term."""
    targets = _edge_targets(observations, tape.horizon + 1, tape.n_agents)
    losses, _ = _batch_loss_and_grad(tape, targets, config, with_grad=False)
    return float(losses[0])


def gradient(tape: RolloutTape, observations: ObservationSeries, config: LbiConfig) -> np.ndarray:
    """dloss/dx0 of a single rollout, shape (N,)."""
    targets = _edge_targets(observations, tape.horizon + 1, tape.n_agents)
    _, grad = _batch_loss_and_grad(tape, targets, config)
    return grad[0]


def surrogate_loss(
    x0: np.ndarray, tape: RolloutTape, observations: ObservationSeries, config: LbiConfig
) -> float:
    """
    Loss of a rollout from ``x0`` that reuses the tape's interaction matrices.

    This is the function whose exact derivative :func:`gradient` computes.
    """
    x = np.asarray(x0, dtype=np.float64)[None, :]
    states = np.empty_like(tape.states[:, :1, :])
    states[0] = x
    for t in range(tape.horizon):
        a = tape.adjacency(t)[:1]
        x = tape.mu * np.matmul(a, x[..., None])[..., 0] + tape.coefficients[t, :1] * x
        states[t + 1] = x
    frozen = RolloutTape(
        states, tape.packed_adjacency[:, :1], tape.coefficients[:, :1], tape.epsilon, tape.mu
    )
    return loss(frozen, observations, config)


def infer(observations: ObservationSeries, config: LbiConfig) -> LbiResult:
    """
    Maximum-likelihood x(0) from edge observations of steps 0..T_train.

    Each restart starts from its own uniform draw on [init_low, init_high]^N,
    parameterised as x0 = logistic(z). Restarts whose loss turns non-finite are
    dropped; the surviving restart with the lowest final loss is returned.

    Raises:
        ObservationShapeError: If the observations are not an edge series long enough
        InferenceAbortedError: If every restart was aborted
    """
    started = time.perf_counter()
    n_agents = _n_agents(observations)
    horizon = config.horizon_train
    targets = _edge_targets(observations, horizon + 1, n_agents)
    n_restarts = config.restarts

    z = np.stack(
        [
            logit(g.uniform(config.init_low, config.init_high, size=n_agents))
            for g in spawn(config.seed, "restarts", n_restarts)
        ]
    )
    optimizer = AdamOptimizer(
        z.shape, config.learning_rate, beta1=config.beta1, beta2=config.beta2
    )
    active = np.ones(n_restarts, dtype=bool)
    history = np.full((config.iterations, n_restarts), np.nan)

    for it in range(config.iterations):
        x0 = expit(z)
        tape = _rollout_batch(x0, config.epsilon_assumed, config.mu, horizon)
        losses, grad_x0 = _batch_loss_and_grad(tape, targets, config)
        history[it] = np.where(active, losses, np.nan)

        bad = active & ~(np.isfinite(losses) & np.all(np.isfinite(grad_x0), axis=-1))
        for r in np.flatnonzero(bad):
            logger.warning(
                "Aborting restart after non-finite loss",
                extra={"restart": int(r), "iteration": it},
            )
        active &= ~bad
        if not active.any():
            raise InferenceAbortedError(
                f"all {n_restarts} restarts produced non-finite losses by iteration {it}"
            )

        grad_z = np.where(active[:, None], grad_x0 * x0 * (1.0 - x0), 0.0)
        z = optimizer.step(z, grad_z, mask=active)

    x0 = expit(z)
    final_tape = _rollout_batch(x0, config.epsilon_assumed, config.mu, horizon)
    final_losses, _ = _batch_loss_and_grad(final_tape, targets, config, with_grad=False)
    final_losses = np.where(active & np.isfinite(final_losses), final_losses, np.inf)
    if not np.isfinite(final_losses).any():
        raise InferenceAbortedError("no restart finished with a finite loss")

    best = int(np.argmin(final_losses))
    restart_losses = [float(v) if np.isfinite(v) else None for v in final_losses]
    wall_time = time.perf_counter() - started
    logger.debug(
        "Likelihood inference finished",
        extra={"best_restart": best, "final_loss": restart_losses[best], "seconds": wall_time},
    )
    return LbiResult(
        x0_estimate=OpinionState(x0[best], 0),
        trajectory=final_tape.states[:, best, :].copy(),
        loss_history=history[:, best].copy(),
        best_restart=best,
        restart_losses=restart_losses,
        wall_time=wall_time,
    )


def _n_agents(observations: ObservationSeries) -> int:
    n = int(round((1.0 + np.sqrt(1.0 + 8.0 * observations.dim)) / 2.0))
    if n * (n - 1) // 2 != observations.dim:
        raise ObservationShapeError(f"{observations.dim} is not a triangular pair count")
    return n


class LbiEstimator(LatentStateEstimator):
    """Likelihood-based inference with gradient descent through the rollout."""

    method = Method.LBI

    def __init__(self, config: LbiConfig):
        self.config = config

    def reconstruct(self, observations: ObservationSeries, params: ModelParams) -> Reconstruction:
        if len(observations) == 0:
            raise ObservationShapeError("likelihood inference needs at least one observed step")
        config = LbiConfig.model_validate(
            {
                **self.config.model_dump(),
                "mu": params.mu,
                "horizon_train": len(observations) - 1,
            }
        )
        result = infer(observations, config)
        return Reconstruction(
            method=self.method,
            estimates=result.trajectory,
            diagnostics={
                "best_restart": result.best_restart,
                "restart_losses": result.restart_losses,
                "final_loss": result.final_loss,
                "wall_time": result.wall_time,
                "loss_history": result.loss_history,
            },
        )

    def forecast(
        self, reconstruction: Reconstruction, params: ModelParams, steps: int
    ) -> ForecastPath:
        tape = _rollout_batch(
            reconstruction.final_state[None, :], self.config.epsilon_assumed, params.mu, steps
        )
        states = tape.states[:, 0, :]
        probabilities = observe_batch(states[1:], self.config.epsilon_assumed, Granularity.EDGE)
        return ForecastPath(states=states.copy(), probabilities=probabilities.astype(np.float64))
