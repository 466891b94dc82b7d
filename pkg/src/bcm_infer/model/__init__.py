"""Bounded-Confidence Model: dynamics, observation operators and trajectories."""

from .dynamics import (
    adjacency,
    confidence_set,
    initial_opinions,
    observe,
    observe_batch,
    pair_index,
    simulate,
    step,
)
from .types import (
    EdgeObservation,
    ModelParams,
    ObservationSeries,
    ObservationShapeError,
    OpinionState,
    Trajectory,
)

__all__ = [
    "EdgeObservation",
    "ModelParams",
    "ObservationSeries",
    "ObservationShapeError",
    "OpinionState",
    "Trajectory",
    "adjacency",
    "confidence_set",
    "initial_opinions",
    "observe",
    "observe_batch",
    "pair_index",
    "simulate",
    "step",
]
