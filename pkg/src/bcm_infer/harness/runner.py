"""
Single-run execution: ground truth, inference and forecasting.

The ``*_job`` functions are module-level so they can be shipped to worker
processes; they take the store location rather than open handles and return
the run's manifest entry.
"""

import logging
import time
import traceback
from functools import lru_cache
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field

from ..constants import Granularity, Method
from ..inference.enkf import EnkfEstimator, FilterConfig
from ..inference.interface import LatentStateEstimator, Reconstruction
from ..inference.lbi import LbiConfig, LbiEstimator
from ..metrics import (
    RECONSTRUCTION_METRICS,
    ReconstructionReport,
    constant_predictor_probs,
    forecast_report,
    reconstruction_report,
)
from ..model.dynamics import initial_opinions, simulate
from ..model.types import Trajectory
from .models import RunRecord, RunSpec, RunStatus, ScenarioCell, ScenarioGrid
from .store import ResultStore

logger = logging.getLogger(__name__)


class RunFailedError(Exception):
    """Raised when a run fails; carries the run context."""

    def __init__(self, spec: RunSpec, cause: BaseException):
        self.run_id = spec.run_id
        self.method = spec.method.value
        self.cell_id = spec.cell.cell_id
        self.cause = cause
        super().__init__(
            f"Run {self.run_id} ({spec.label}, {self.cell_id}) failed: "
            f"{type(cause).__name__}: {cause}"
        )


class RunSettings(BaseModel):
    """Inference settings shared by every run of a sweep."""

    model_config = ConfigDict(frozen=True)

    filter: FilterConfig = Field(default_factory=FilterConfig)
    lbi: LbiConfig = Field(default_factory=LbiConfig)
    snapshot: dict[str, Any] = Field(
        default_factory=dict, description="Resolved application config echoed into params.json"
    )


def generate_cell(cell: ScenarioCell) -> Trajectory:
    """Simulate one grid cell from its seed."""
    params = cell.model_params()
    trajectory = simulate(initial_opinions(params), params)
    trajectory.meta["cell_id"] = cell.cell_id
    return trajectory


def generate_ground_truth(
    grid: ScenarioGrid, store: Optional[ResultStore] = None, export_edges: bool = False
) -> list[Trajectory]:
    """
    One trajectory per grid cell.

    With a store, cells already on disk are loaded instead of re-simulated and
    new ones are persisted.
    """
    trajectories = []
    for cell in grid.cells():
        if store is not None and store.has_truth(cell):
            logger.debug("Ground truth exists, loading", extra={"cell_id": cell.cell_id})
            trajectories.append(store.load_truth(cell))
            continue
        started = time.perf_counter()
        trajectory = generate_cell(cell)
        if store is not None:
            store.save_truth(cell, trajectory, export_edges=export_edges)
        logger.debug(
            "Generated ground truth",
            extra={"cell_id": cell.cell_id, "seconds": round(time.perf_counter() - started, 3)},
        )
        trajectories.append(trajectory)
    return trajectories


def build_estimator(spec: RunSpec, settings: RunSettings) -> LatentStateEstimator:
    """Estimator configured with the run's assumed confidence bound."""
    if spec.method is Method.DA:
        config = settings.filter.model_copy(
            update={"granularity": spec.granularity, "epsilon_assumed": spec.epsilon_assumed}
        )
        return EnkfEstimator(config)
    config = settings.lbi.model_copy(
        update={
            "epsilon_assumed": spec.epsilon_assumed,
            "mu": spec.cell.mu,
            "horizon_train": spec.cell.train_cutoff,
            "seed": settings.lbi.seed + spec.cell.seed,
        }
    )
    return LbiEstimator(config)


def run_inference(spec: RunSpec, truth: Trajectory, settings: RunSettings) -> RunRecord:
    """
    Reconstruct the latent opinions from observations up to the cutoff.

    Raises:
        RunFailedError: If the estimator fails
    """
    cell = spec.cell
    if truth.params != cell.model_params():
        raise RunFailedError(spec, ValueError("ground truth does not match the run's grid cell"))

    observations = truth.series(spec.granularity).window(cell.train_cutoff)
    estimator = build_estimator(spec, settings)
    started = time.perf_counter()
    try:
        result = estimator.reconstruct(observations, cell.model_params())
    except Exception as e:
        raise RunFailedError(spec, e) from e
    elapsed = time.perf_counter() - started

    record = RunRecord(spec=spec, status=RunStatus.INFERRED, result=result)
    record.estimates = result.estimates
    record.timing["inference_seconds"] = elapsed
    record.diagnostics = {k: v for k, v in result.diagnostics.items() if k != "loss_history"}
    for t in (0, cell.train_cutoff):
        record.reconstruction[t] = reconstruction_report(truth.states[t], result.estimates[t], t)
    return record


def run_forecast(record: RunRecord, truth: Trajectory, settings: RunSettings) -> RunRecord:
    """
    Run the noise-free model forward from the reconstruction at the cutoff.

    Raises:
        RunFailedError: If forecasting fails
    """
    spec = record.spec
    cell = spec.cell
    if record.result is None:
        raise RunFailedError(spec, ValueError("run has no reconstruction to forecast from"))

    steps = cell.horizon - cell.train_cutoff
    estimator = build_estimator(spec, settings)
    started = time.perf_counter()
    try:
        path = estimator.forecast(record.result, cell.model_params(), steps)
    except Exception as e:
        raise RunFailedError(spec, e) from e

    first = cell.train_cutoff + 1
    edges = truth.series(Granularity.EDGE).values[first:]
    nodes = truth.series(Granularity.NODE).values[first:]
    totals = truth.series(Granularity.GLOBAL).values[first:]

    record.forecast = forecast_report(edges, nodes, totals, path.probabilities, first)
    baseline_probs = constant_predictor_probs(
        truth.series(Granularity.EDGE).at(cell.train_cutoff), steps
    )
    record.baseline = forecast_report(edges, nodes, totals, baseline_probs, first)
    record.forecast_states = path.states
    record.timing["forecast_seconds"] = time.perf_counter() - started
    record.status = RunStatus.COMPLETED
    return record


def restore_record(store: ResultStore, spec: RunSpec) -> RunRecord:
    """Rebuild an inferred run from its stored reconstruction."""
    arrays = store.load_inference(spec.run_id)
    params = store.read_run_params(spec.run_id)
    result = Reconstruction(
        method=spec.method,
        estimates=arrays["estimates"],
        spread=arrays.get("spread"),
        ensemble=arrays.get("ensemble"),
        diagnostics=params.get("diagnostics", {}),
    )
    record = RunRecord(spec=spec, status=RunStatus.INFERRED, result=result)
    record.estimates = result.estimates
    record.diagnostics = dict(result.diagnostics)
    record.timing = dict(params.get("timing", {}))
    cutoff = spec.cell.train_cutoff
    stored: dict[int, dict[str, float]] = {0: {}, cutoff: {}}
    for row in store.read_metrics(spec.run_id):
        if row["t"] in stored and row["metric"] in RECONSTRUCTION_METRICS:
            stored[row["t"]][row["metric"]] = row["value"]
    for t, values in stored.items():
        if len(values) == len(RECONSTRUCTION_METRICS):
            record.reconstruction[t] = ReconstructionReport(time=t, **values)
    return record


@lru_cache(maxsize=4)
def _cached_truth(root: str, cell_json: str) -> Trajectory:
    store = ResultStore(root)
    return store.load_truth(ScenarioCell.model_validate_json(cell_json))


def _load_truth(store_root: str, cell: ScenarioCell) -> Trajectory:
    return _cached_truth(str(store_root), cell.model_dump_json())


def _failed_entry(
    store: ResultStore, spec: RunSpec, settings: RunSettings, error: BaseException
) -> dict[str, Any]:
    record = RunRecord(spec=spec, status=RunStatus.FAILED, error=str(error))
    logger.error(
        f"Run failed: {error}",
        extra={"run_id": spec.run_id, "method": spec.method.value},
        exc_info=(type(error), error, error.__traceback__),
    )
    try:
        store.write_run_params(record, settings.snapshot)
        record.artifacts["params"] = str(store.run_params_path(spec.run_id).relative_to(store.root))
    except OSError:
        logger.debug("Could not write failure record", extra={"run_id": spec.run_id})
    entry = record.to_manifest_entry()
    entry["traceback"] = "".join(traceback.format_exception(error))[-2000:]
    return entry


def infer_job(store_root: str, spec: RunSpec, settings: RunSettings) -> dict[str, Any]:
    """Inference stage of one run; returns the manifest entry."""
    store = ResultStore(store_root)
    try:
        truth = _load_truth(store_root, spec.cell)
        record = run_inference(spec, truth, settings)
        store.save_inference(record, settings.snapshot)
        _log_finished("inference", record)
        return record.to_manifest_entry()
    except Exception as e:
        return _failed_entry(store, spec, settings, e)


def forecast_job(store_root: str, spec: RunSpec, settings: RunSettings) -> dict[str, Any]:
    """Forecast stage of an inferred run; returns the manifest entry."""
    store = ResultStore(store_root)
    try:
        truth = _load_truth(store_root, spec.cell)
        record = restore_record(store, spec)
        record.artifacts.update(_artifacts(store, spec.run_id))
        run_forecast(record, truth, settings)
        store.save_forecast(record, settings.snapshot)
        _log_finished("forecast", record)
        return record.to_manifest_entry()
    except Exception as e:
        return _failed_entry(store, spec, settings, e)


def execute_run(store_root: str, spec: RunSpec, settings: RunSettings) -> dict[str, Any]:
    """Inference followed by forecasting."""
    store = ResultStore(store_root)
    try:
        truth = _load_truth(store_root, spec.cell)
        record = run_inference(spec, truth, settings)
        store.save_inference(record, settings.snapshot)
        run_forecast(record, truth, settings)
        store.save_forecast(record, settings.snapshot)
        _log_finished("run", record)
        return record.to_manifest_entry()
    except Exception as e:
        return _failed_entry(store, spec, settings, e)


def _artifacts(store: ResultStore, run_id: str) -> dict[str, str]:
    directory = store.run_dir(run_id)
    names = {"params": "params.json", "states": "states.csv", "inference": "inference.npz"}
    return {
        key: str((directory / name).relative_to(store.root))
        for key, name in names.items()
        if (directory / name).exists()
    }


def _log_finished(stage: str, record: RunRecord) -> None:
    seconds = sum(record.timing.values())
    logger.info(
        f"Finished {stage} for {record.spec.label}",
        extra={
            "run_id": record.run_id,
            "method": record.spec.method.value,
            "cell_id": record.spec.cell.cell_id,
            "seconds": round(seconds, 3),
        },
    )

