"""Bounded-Confidence Model dynamics and observation operators.

Synchronous update on the complete graph::

    x_i(t+1) = x_i(t) + mu * sum_{j : |x_i - x_j| <= eps} (x_j(t) - x_i(t))

Self-interaction is included in the confidence set (it contributes zero) and
boundary ties count as interacting. All pair vectors use the row-major
upper-triangle ordering returned by :func:`pair_index`.
"""

import logging
from functools import lru_cache
from typing import Optional

import numpy as np

from ..constants import Granularity
from ..utils.rng import substream
from .types import ModelParams, ObservationSeries, OpinionState, Trajectory, observation_dim

logger = logging.getLogger(__name__)


@lru_cache(maxsize=32)
def pair_index(n_agents: int) -> tuple[np.ndarray, np.ndarray]:
    """Row and column indices of the unordered pairs i<j, row-major."""
    rows, cols = np.triu_indices(n_agents, k=1)
    rows.setflags(write=False)
    cols.setflags(write=False)
    return rows, cols


def n_agents_from_pairs(n_pairs: int) -> int:
    """Invert E = N(N-1)/2."""
    n = int(round((1.0 + np.sqrt(1.0 + 8.0 * n_pairs)) / 2.0))
    if n * (n - 1) // 2 != n_pairs:
        raise ValueError(f"{n_pairs} is not a triangular pair count")
    return n


def adjacency(opinions: np.ndarray, epsilon: float) -> np.ndarray:
    """
    Interaction matrix A with A_ij = 1 iff |x_i - x_j| <= epsilon.

    Accepts a single state (N,) or a batch (..., N); the result has shape (..., N, N)
    and a unit diagonal.
    """
    x = np.asarray(opinions, dtype=np.float64)
    return np.abs(x[..., :, None] - x[..., None, :]) <= epsilon


def confidence_set(state: OpinionState, agent: int, epsilon: float) -> np.ndarray:
    """Sorted indices j (including ``agent``) with |x_agent - x_j| <= epsilon."""
    if not 0 <= agent < state.n_agents:
        raise IndexError(f"agent {agent} out of range for {state.n_agents} agents")
    x = state.opinions
    return np.flatnonzero(np.abs(x[agent] - x) <= epsilon)


def drift(opinions: np.ndarray, epsilon: float, mu: float) -> np.ndarray:
    """Deterministic update increment mu * (A x - deg * x), batched over leading axes."""
    x = np.asarray(opinions, dtype=np.float64)
    a = adjacency(x, epsilon).astype(np.float64)
    pulled = np.matmul(a, x[..., None])[..., 0]
    return mu * (pulled - a.sum(axis=-1) * x)


def step(
    state: OpinionState,
    params: ModelParams,
    rng: Optional[np.random.Generator] = None,
    epsilon: Optional[float] = None,
) -> OpinionState:
    """
    Advance one synchronous BCM step.

    Gaussian noise N(0, sigma^2) is added per agent after the deterministic
    update when ``params.noise_sigma > 0``; the result is clamped to [0, 1].

    Args:
        state: Current opinions x(t)
        params: Model parameters (``mu``, ``noise_sigma``; ``epsilon`` unless overridden)
        rng: Noise generator, required when noise_sigma > 0
        epsilon: Confidence bound override (inference engines use their assumed value)

    Returns:
        Opinions x(t+1)
    """
    eps = params.epsilon if epsilon is None else epsilon
    x = state.opinions
    nxt = x + drift(x, eps, params.mu)
    if params.noise_sigma > 0:
        if rng is None:
            raise ValueError("a generator is required when noise_sigma > 0")
        nxt = nxt + params.noise_sigma * rng.standard_normal(x.shape[0])
    np.clip(nxt, 0.0, 1.0, out=nxt)
    return OpinionState(nxt, state.time + 1)


def observe_batch(opinions: np.ndarray, epsilon: float, granularity: Granularity) -> np.ndarray:
    """
    Observation operator applied to a batch of states.

    Args:
        opinions: Array (..., N)
        epsilon: Confidence bound
        granularity: edge, node or global

    Returns:
        Integer array (..., m)
    """
    granularity = Granularity(granularity)
    x = np.asarray(opinions, dtype=np.float64)
    n = x.shape[-1]
    a = adjacency(x, epsilon)
    if granularity is Granularity.EDGE:
        rows, cols = pair_index(n)
        return a[..., rows, cols].astype(np.uint8)
    node = a.sum(axis=-1, dtype=np.int64) - 1
    if granularity is Granularity.NODE:
        return node
    return node.sum(axis=-1, keepdims=True) // 2


def observe(state: OpinionState, epsilon: float, granularity: Granularity | str) -> np.ndarray:
    """
    Observation operator h.

    edge: indicator per pair i<j; node: interaction count per agent excluding
    self; global: one-element vector with the total number of interacting pairs.
    """
    return observe_batch(state.opinions, epsilon, Granularity(granularity))


def initial_opinions(params: ModelParams) -> OpinionState:
    """Uniform draw on [0, 1]^N from the seed's initial-condition substream."""
    rng = substream(params.seed, "initial")
    return OpinionState(rng.uniform(0.0, 1.0, size=params.n_agents), 0)


def simulate(x0: OpinionState, params: ModelParams) -> Trajectory:
    """
    Roll the model out for ``params.horizon`` steps.

    States and observations at all three granularities are recorded at every
    step t = 0..T. Noise comes from the seed's noise substream, one draw of N
    normals per step, so extending T leaves earlier steps unchanged.

    Raises:
        ValueError: If x0 has the wrong length or leaves [0, 1]
    """
    if x0.n_agents != params.n_agents:
        raise ValueError(f"x0 has {x0.n_agents} agents, params expect {params.n_agents}")
    if np.any(x0.opinions < 0.0) or np.any(x0.opinions > 1.0):
        raise ValueError("initial opinions must lie in [0, 1]")

    horizon = params.horizon
    states = np.empty((horizon + 1, params.n_agents), dtype=np.float64)
    states[0] = x0.opinions
    rng = substream(params.seed, "noise") if params.noise_sigma > 0 else None

    state = OpinionState(x0.opinions.copy(), 0)
    for t in range(horizon):
        state = step(state, params, rng)
        states[t + 1] = state.opinions

    observations = observe_series(states, params.epsilon)
    logger.debug(
        "Simulated trajectory",
        extra={"epsilon": params.epsilon, "noise_sigma": params.noise_sigma, "seed": params.seed},
    )
    return Trajectory(states=states, observations=observations, params=params)


def observe_series(states: np.ndarray, epsilon: float) -> dict[Granularity, ObservationSeries]:
    """Edge, node and global observation series of a state sequence (steps, N)."""
    steps, n = states.shape
    rows, cols = pair_index(n)
    edges = np.empty((steps, observation_dim(Granularity.EDGE, n)), dtype=np.uint8)
    nodes = np.empty((steps, n), dtype=np.int64)
    for t in range(steps):
        a = adjacency(states[t], epsilon)
        edges[t] = a[rows, cols]
        nodes[t] = a.sum(axis=1) - 1
    totals = nodes.sum(axis=1, keepdims=True) // 2
    return {
        Granularity.EDGE: ObservationSeries(Granularity.EDGE, edges),
        Granularity.NODE: ObservationSeries(Granularity.NODE, nodes),
        Granularity.GLOBAL: ObservationSeries(Granularity.GLOBAL, totals),
    }
