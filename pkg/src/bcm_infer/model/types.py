"""Value types for Bounded-Confidence Model simulation."""

from dataclasses import dataclass, field
from typing import Dict

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..constants import Granularity


class ObservationShapeError(ValueError):
    """Raised when an observation vector does not match its granularity."""

    pass


class ModelParams(BaseModel):
    """Full simulation configuration of one BCM run."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    epsilon: float = Field(..., gt=0.0, le=1.0, description="Confidence bound")
    mu: float = Field(..., ge=0.0, le=0.5, description="Convergence rate")
    n_agents: int = Field(..., ge=2, description="Number of agents N")
    noise_sigma: float = Field(0.0, ge=0.0, description="Std of per-step opinion noise")
    horizon: int = Field(..., ge=0, description="Total number of steps T")
    seed: int = Field(0, ge=0, lt=2**64, description="Master RNG seed")

    @property
    def n_pairs(self) -> int:
        """Number of unordered agent pairs E = N(N-1)/2."""
        return self.n_agents * (self.n_agents - 1) // 2


@dataclass(eq=False)
class OpinionState:
    """Opinion vector of all agents at one time step."""

    opinions: np.ndarray
    time: int = 0

    def __post_init__(self) -> None:
        self.opinions = np.asarray(self.opinions, dtype=np.float64)
        if self.opinions.ndim != 1:
            raise ValueError(f"opinions must be a vector, got shape {self.opinions.shape}")

    @property
    def n_agents(self) -> int:
        return int(self.opinions.shape[0])

    def mirrored(self) -> "OpinionState":
        """Reflection of the state around 0.5."""
        return OpinionState(1.0 - self.opinions, self.time)


@dataclass(eq=False)
class EdgeObservation:
    """Interaction indicators over unordered pairs i<j at one step."""

    indicators: np.ndarray
    time: int = 0

    def __post_init__(self) -> None:
        self.indicators = np.asarray(self.indicators, dtype=np.uint8)
        if not np.isin(self.indicators, (0, 1)).all():
            raise ObservationShapeError("edge indicators must be 0 or 1")


def observation_dim(granularity: Granularity, n_agents: int) -> int:
    """Length of one observation vector at the given granularity."""
    granularity = Granularity(granularity)
    if granularity is Granularity.EDGE:
        return n_agents * (n_agents - 1) // 2
    if granularity is Granularity.NODE:
        return n_agents
    return 1


@dataclass(eq=False)
class ObservationSeries:
    """
    Per-step observations at one granularity.

    ``values`` has shape (steps, m) with m = E (binary), N (counts) or 1 (total).
    """

    granularity: Granularity
    values: np.ndarray

    def __post_init__(self) -> None:
        self.granularity = Granularity(self.granularity)
        values = np.asarray(self.values)
        if values.ndim == 1:
            values = values.reshape(-1, 1) if self.granularity is Granularity.GLOBAL else values
        if values.ndim != 2:
            raise ObservationShapeError(f"observation series must be 2-D, got {values.shape}")
        self.values = values

    def __len__(self) -> int:
        return int(self.values.shape[0])

    @property
    def dim(self) -> int:
        return int(self.values.shape[1])

    def at(self, t: int) -> np.ndarray:
        """Observation vector at step ``t``."""
        return self.values[t]

    def window(self, last_step: int) -> "ObservationSeries":
        """Observations for steps 0..last_step inclusive."""
        return ObservationSeries(self.granularity, self.values[: last_step + 1])

    def edge(self, t: int) -> EdgeObservation:
        if self.granularity is not Granularity.EDGE:
            raise ObservationShapeError(f"{self.granularity.value} series has no edge view")
        return EdgeObservation(self.values[t], t)


@dataclass(eq=False)
class Trajectory:
    """States and observations of one simulated run, t = 0..T."""

    states: np.ndarray
    observations: Dict[Granularity, ObservationSeries]
    params: ModelParams
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.states.shape[0])

    def state(self, t: int) -> OpinionState:
        return OpinionState(self.states[t], t)

    def series(self, granularity: Granularity | str) -> ObservationSeries:
        return self.observations[Granularity(granularity)]

    def window(self, last_step: int) -> "Trajectory":
        """Prefix of the trajectory up to and including ``last_step``."""
        return Trajectory(
            states=self.states[: last_step + 1],
            observations={g: s.window(last_step) for g, s in self.observations.items()},
            params=self.params,
            meta=dict(self.meta),
        )
