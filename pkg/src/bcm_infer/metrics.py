"""Reconstruction and forecasting error metrics.

Reconstruction errors compare a latent opinion estimate with the ground truth:
plain mean absolute error, the error modulo the reflection x -> 1 - x, and the
error between the ascending-sorted vectors. Forecast errors compare predicted
interaction probabilities p_ij with observed interactions at edge, node and
global level; Brier scores are lower-is-better.

Every function is pure. Forecast functions accept a single step (E,) or a
batch of steps (steps, E).
"""

from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Optional

import numpy as np

from .model.dynamics import n_agents_from_pairs, pair_index
from .model.types import EdgeObservation, OpinionState


class MetricShapeError(ValueError):
    """Raised when metric inputs have incompatible shapes."""

    pass


class ZeroBaselineError(ValueError):
    """Raised when normalising by a baseline error of zero."""

    pass


class Baseline(str, Enum):
    """Forecast error normalisation."""

    NONE = "none"
    CONSTANT_PREDICTOR = "constant-predictor"


RECONSTRUCTION_METRICS = ("e_plain", "e_symm", "e_sort")


def _opinions(value: OpinionState | np.ndarray) -> np.ndarray:
    if isinstance(value, OpinionState):
        return value.opinions
    return np.asarray(value, dtype=np.float64)


def _pair(truth, estimate) -> tuple[np.ndarray, np.ndarray]:
    x = _opinions(truth)
    x_hat = _opinions(estimate)
    if x.shape != x_hat.shape:
        raise MetricShapeError(f"truth has shape {x.shape}, estimate has shape {x_hat.shape}")
    return x, x_hat


def reconstruction_error(truth, estimate) -> float:
    """E = (1/N) sum_i |x_i - x_hat_i|."""
    x, x_hat = _pair(truth, estimate)
    return float(np.mean(np.abs(x - x_hat)))


def symmetric_error(truth, estimate) -> float:
    """E_symm = (1/N) sum_i min(|x_i - x_hat_i|, |x_i - (1 - x_hat_i)|)."""
    x, x_hat = _pair(truth, estimate)
    return float(np.mean(np.minimum(np.abs(x - x_hat), np.abs(x - (1.0 - x_hat)))))


def sorted_error(truth, estimate) -> float:
    """MAE between the ascending-sorted truth and estimate."""
    x, x_hat = _pair(truth, estimate)
    return float(np.mean(np.abs(np.sort(x, kind="stable") - np.sort(x_hat, kind="stable"))))


def _probs(probs: np.ndarray, n_pairs: Optional[int] = None) -> np.ndarray:
    p = np.asarray(probs, dtype=np.float64)
    if n_pairs is not None and p.shape[-1] != n_pairs:
        raise MetricShapeError(f"expected {n_pairs} pair probabilities, got {p.shape[-1]}")
    return p


def _edges(truth_edges) -> np.ndarray:
    if isinstance(truth_edges, EdgeObservation):
        return truth_edges.indicators.astype(np.float64)
    return np.asarray(truth_edges, dtype=np.float64)


@lru_cache(maxsize=8)
def _membership(n_agents: int) -> np.ndarray:
    """(E, N) 0/1 matrix marking the two agents of each pair."""
    rows, cols = pair_index(n_agents)
    m = np.zeros((len(rows), n_agents))
    k = np.arange(len(rows))
    m[k, rows] = 1.0
    m[k, cols] = 1.0
    m.setflags(write=False)
    return m


def node_probabilities(probs: np.ndarray) -> np.ndarray:
    """Expected interaction count per agent, sum_j p_ij over pairs containing i."""
    p = _probs(probs)
    try:
        n = n_agents_from_pairs(p.shape[-1])
    except ValueError as e:
        raise MetricShapeError(str(e)) from e
    return p @ _membership(n)


def forecast_edge_error(truth_edges, probs) -> float | np.ndarray:
    """F_edge = (1/E) sum |y_ij - p_ij|."""
    y = _edges(truth_edges)
    p = _probs(probs, y.shape[-1])
    return _scalar(np.mean(np.abs(y - p), axis=-1))


def forecast_node_error(truth_nodes, probs) -> float | np.ndarray:
    """F_node = (1/N) sum_i |y_i - sum_j p_ij|."""
    y = np.asarray(truth_nodes, dtype=np.float64)
    expected = node_probabilities(probs)
    if expected.shape[-1] != y.shape[-1]:
        raise MetricShapeError(
            f"{y.shape[-1]} node counts do not match {expected.shape[-1]} agents"
        )
    return _scalar(np.mean(np.abs(y - expected), axis=-1))


def forecast_global_error(truth_total, probs) -> float | np.ndarray:
    """F_global = |y - sum_ij p_ij|."""
    y = np.asarray(truth_total, dtype=np.float64)
    total = _probs(probs).sum(axis=-1)
    if y.ndim and y.shape[-1] == 1 and y.ndim == total.ndim + 1:
        y = y[..., 0]
    return _scalar(np.abs(y - total))


def brier(truth_edges, probs) -> float | np.ndarray:
    """(1/E) sum (y_ij - p_ij)^2; lower is better."""
    y = _edges(truth_edges)
    p = _probs(probs, y.shape[-1])
    return _scalar(np.mean(np.square(y - p), axis=-1))


def brier_node(truth_nodes, probs) -> float | np.ndarray:
    """Mean squared node-count error scaled by the largest count, (N-1)^2."""
    y = np.asarray(truth_nodes, dtype=np.float64)
    expected = node_probabilities(probs)
    if expected.shape[-1] != y.shape[-1]:
        raise MetricShapeError(
            f"{y.shape[-1]} node counts do not match {expected.shape[-1]} agents"
        )
    scale = float(y.shape[-1] - 1) ** 2
    return _scalar(np.mean(np.square(y - expected), axis=-1) / scale)


def brier_global(truth_total, probs) -> float | np.ndarray:
    """Squared total-count error scaled by E^2."""
    p = _probs(probs)
    n_pairs = p.shape[-1]
    err = np.asarray(forecast_global_error(truth_total, p), dtype=np.float64)
    return _scalar(np.square(err) / float(n_pairs) ** 2)


def constant_predictor_probs(edges_at_cutoff, steps: Optional[int] = None) -> np.ndarray:
    """
    Probabilities of the constant predictor.

    Every pair is assigned the interaction rate observed at the last training
    step. Returns shape (E,), or (steps, E) when ``steps`` is given.
    """
    y = _edges(edges_at_cutoff)
    if y.ndim != 1:
        raise MetricShapeError(f"expected one edge vector, got shape {y.shape}")
    p = np.full(y.shape[0], float(y.mean()) if y.size else 0.0)
    return p if steps is None else np.broadcast_to(p, (steps, y.shape[0])).copy()


def _scalar(value: np.ndarray) -> float | np.ndarray:
    return float(value) if np.ndim(value) == 0 else value


def normalize_errors(
    errors: np.ndarray,
    baseline: Baseline | str = Baseline.NONE,
    baseline_errors: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Divide errors by the error of a baseline predictor on the same data.

    Raises:
        ValueError: If the constant-predictor baseline is requested without its errors
        ZeroBaselineError: If any baseline error is zero
    """
    baseline = Baseline(baseline)
    values = np.asarray(errors, dtype=np.float64)
    if baseline is Baseline.NONE:
        return values.copy()
    if baseline_errors is None:
        raise ValueError("constant-predictor normalisation needs the baseline errors")
    reference = np.asarray(baseline_errors, dtype=np.float64)
    if reference.shape != values.shape and reference.size != 1:
        raise MetricShapeError(f"baseline shape {reference.shape} != error shape {values.shape}")
    if np.any(reference == 0.0):
        raise ZeroBaselineError("baseline error is zero; normalised error is undefined")
    return values / reference


@dataclass(frozen=True)
class ReconstructionReport:
    """Reconstruction errors at one step."""

    time: int
    e_plain: float
    e_symm: float
    e_sort: float

    def as_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in RECONSTRUCTION_METRICS}


def reconstruction_report(truth, estimate, time: int) -> ReconstructionReport:
    return ReconstructionReport(
        time=time,
        e_plain=reconstruction_error(truth, estimate),
        e_symm=symmetric_error(truth, estimate),
        e_sort=sorted_error(truth, estimate),
    )


FORECAST_METRICS = (
    "f_edge",
    "f_node",
    "f_global",
    "brier",
    "brier_node",
    "brier_global",
)


@dataclass
class ForecastReport:
    """Per-step forecast errors for t in (cutoff, horizon]."""

    steps: np.ndarray
    f_edge: np.ndarray
    f_node: np.ndarray
    f_global: np.ndarray
    brier: np.ndarray
    brier_node: np.ndarray
    brier_global: np.ndarray
    predicted_global: np.ndarray
    extra: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def horizon(self) -> tuple[int, int]:
        if len(self.steps) == 0:
            return (0, 0)
        return int(self.steps[0]), int(self.steps[-1])

    def series(self) -> dict[str, np.ndarray]:
        """All named per-step series, including ``predicted_global`` and extras."""
        out = {name: getattr(self, name) for name in FORECAST_METRICS}
        out["predicted_global"] = self.predicted_global
        out.update(self.extra)
        return out

    def time_averaged(self) -> dict[str, float]:
        """Uniform average of each error series over the forecast window."""
        return {
            name: float(np.mean(values)) if len(values) else float("nan")
            for name, values in self.series().items()
            if name != "predicted_global"
        }


def forecast_report(
    edges: np.ndarray,
    nodes: np.ndarray,
    totals: np.ndarray,
    probabilities: np.ndarray,
    first_step: int,
) -> ForecastReport:
    """
    Score forecast probabilities against observed interactions.

    Args:
        edges: Observed edge indicators (steps, E)
        nodes: Observed node counts (steps, N)
        totals: Observed total interactions (steps,) or (steps, 1)
        probabilities: Predicted probabilities (steps, E)
        first_step: Time index of the first row

    Raises:
        MetricShapeError: If the inputs disagree on the number of steps or pairs
    """
    p = _probs(probabilities)
    y = np.asarray(edges, dtype=np.float64)
    if p.ndim != 2 or y.shape != p.shape:
        raise MetricShapeError(f"edges {y.shape} and probabilities {p.shape} must match (steps, E)")
    totals = np.asarray(totals, dtype=np.float64).reshape(p.shape[0])
    return ForecastReport(
        steps=np.arange(first_step, first_step + p.shape[0]),
        f_edge=np.asarray(forecast_edge_error(y, p)),
        f_node=np.asarray(forecast_node_error(nodes, p)),
        f_global=np.asarray(forecast_global_error(totals, p)),
        brier=np.asarray(brier(y, p)),
        brier_node=np.asarray(brier_node(nodes, p)),
        brier_global=np.asarray(brier_global(totals, p)),
        predicted_global=p.sum(axis=-1),
    )
