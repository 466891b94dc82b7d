"""On-disk result store.

Layout under the output directory::

    truth/<cell_id>/params.json        ModelParams sidecar
    truth/<cell_id>/trajectory.npz     lossless states and observations
    truth/<cell_id>/states.csv         (t, agent, opinion)
    truth/<cell_id>/edges.csv          (t, i, j, indicator), optional
    runs/<run_id>/params.json          spec, resolved config, status, diagnostics
    runs/<run_id>/states.csv           (t, agent, estimate[, spread]) up to the cutoff
    runs/<run_id>/forecast.csv         (t, agent, estimate) from the cutoff on
    runs/<run_id>/metrics.csv          (run_id, metric, t, value)
    runs/<run_id>/inference.npz        arrays needed to resume forecasting
    manifest.json                      run index
    aggregate.csv                      group statistics

Every run writes only inside its own directory; the manifest is written by
the coordinating process alone.
"""

import csv
import logging
from pathlib import Path
from typing import Any, Iterable, Iterator, Optional

import numpy as np

from ..model.io import (
    load_trajectory,
    read_json,
    read_states_csv,
    save_trajectory,
    write_edges_csv,
    write_json,
    write_params_json,
    write_rows,
    write_states_csv,
)
from ..model.types import Trajectory
from .models import AggregateStats, RunRecord, RunStatus, ScenarioCell

logger = logging.getLogger(__name__)

MANIFEST_VERSION = 1
METRIC_COLUMNS = ("run_id", "metric", "t", "value")


class StoreError(Exception):
    """Raised when a stored artifact is missing or unreadable."""

    pass


class ResultStore:
    """Manages the output directory of a sweep."""

    def __init__(self, root: str | Path):
        """
        Initialize the store.

        Args:
            root: Output directory
        """
        self.root = Path(root)

    def initialize(self) -> None:
        """Create the directory skeleton."""
        (self.root / "truth").mkdir(parents=True, exist_ok=True)
        (self.root / "runs").mkdir(parents=True, exist_ok=True)
        logger.debug(f"Result store initialized at {self.root}")

    # Paths

    def truth_dir(self, cell: ScenarioCell) -> Path:
        return self.root / "truth" / cell.cell_id

    def run_dir(self, run_id: str) -> Path:
        return self.root / "runs" / run_id

    @property
    def manifest_path(self) -> Path:
        return self.root / "manifest.json"

    @property
    def aggregate_path(self) -> Path:
        return self.root / "aggregate.csv"

    @property
    def telemetry_path(self) -> Path:
        return self.root / "metrics.prom"

    # Ground truth

    def has_truth(self, cell: ScenarioCell) -> bool:
        return (self.truth_dir(cell) / "trajectory.npz").exists()

    def save_truth(
        self, cell: ScenarioCell, trajectory: Trajectory, export_edges: bool = False
    ) -> Path:
        """Persist a ground-truth trajectory; the archive is written last so it marks completion."""
        directory = self.truth_dir(cell)
        write_params_json(
            directory / "params.json",
            trajectory.params,
            extra={"cell": cell.model_dump(mode="json"), "cell_id": cell.cell_id},
        )
        write_states_csv(directory / "states.csv", trajectory.states)
        if export_edges:
            write_edges_csv(directory / "edges.csv", trajectory.series("edge"))
        save_trajectory(directory / "trajectory.npz", trajectory)
        return directory

    def load_truth(self, cell: ScenarioCell) -> Trajectory:
        """
        Load a ground-truth trajectory.

        Raises:
            StoreError: If the cell has not been simulated
        """
        path = self.truth_dir(cell) / "trajectory.npz"
        if not path.exists():
            raise StoreError(f"No ground truth for {cell.cell_id}; run 'simulate' first")
        return load_trajectory(path)

    def truth_files(self) -> list[Path]:
        return sorted((self.root / "truth").glob("*/trajectory.npz"))

    def truth_cells(self) -> list[ScenarioCell]:
        """Cells with a complete ground truth, in directory order."""
        return [
            ScenarioCell.model_validate(read_json(path.parent / "params.json")["cell"])
            for path in self.truth_files()
        ]

    # Runs

    def run_params_path(self, run_id: str) -> Path:
        return self.run_dir(run_id) / "params.json"

    def read_run_params(self, run_id: str) -> dict[str, Any]:
        path = self.run_params_path(run_id)
        if not path.exists():
            raise StoreError(f"Run {run_id} has no params.json")
        return read_json(path)

    def write_run_params(self, record: RunRecord, config: dict[str, Any]) -> None:
        payload = {
            "run_id": record.run_id,
            "status": record.status.value,
            "spec": record.spec.model_dump(mode="json"),
            "config": config,
            "diagnostics": _json_safe(record.diagnostics),
            "timing": dict(record.timing),
        }
        if record.error:
            payload["error"] = record.error
        write_json(self.run_params_path(record.run_id), payload)

    def save_inference(self, record: RunRecord, config: dict[str, Any]) -> None:
        """Persist the reconstruction, its metric rows and the run sidecar."""
        directory = self.run_dir(record.run_id)
        reconstruction = record.result
        if reconstruction is None:
            raise StoreError(f"Run {record.run_id} has no reconstruction to save")

        write_states_csv(
            directory / "states.csv",
            reconstruction.estimates,
            spread=reconstruction.spread,
            value_column="estimate",
        )
        arrays = {"estimates": reconstruction.estimates}
        if reconstruction.spread is not None:
            arrays["spread"] = reconstruction.spread
        if reconstruction.ensemble is not None:
            arrays["ensemble"] = reconstruction.ensemble
        loss_history = reconstruction.diagnostics.get("loss_history")
        if loss_history is not None:
            arrays["loss_history"] = np.asarray(loss_history)
        _save_npz(directory / "inference.npz", arrays)

        record.artifacts.update(
            {
                "params": str(self.run_params_path(record.run_id).relative_to(self.root)),
                "states": str((directory / "states.csv").relative_to(self.root)),
                "inference": str((directory / "inference.npz").relative_to(self.root)),
            }
        )
        self.write_metrics(record)
        self.write_run_params(record, config)

    def load_inference(self, run_id: str) -> dict[str, np.ndarray]:
        path = self.run_dir(run_id) / "inference.npz"
        if not path.exists():
            raise StoreError(f"Run {run_id} has no stored reconstruction")
        try:
            with np.load(path, allow_pickle=False) as data:
                return {key: data[key] for key in data.files}
        except (OSError, ValueError) as e:
            raise StoreError(f"Run {run_id} reconstruction is unreadable: {e}") from e

    def save_forecast(self, record: RunRecord, config: dict[str, Any]) -> None:
        """Persist forecast states and all metric rows of a completed run."""
        directory = self.run_dir(record.run_id)
        if record.forecast_states is not None:
            write_states_csv(
                directory / "forecast.csv",
                record.forecast_states,
                value_column="estimate",
                first_step=record.spec.cell.train_cutoff,
            )
            record.artifacts["forecast"] = str(
                (directory / "forecast.csv").relative_to(self.root)
            )
        self.write_metrics(record)
        self.write_run_params(record, config)

    def write_metrics(self, record: RunRecord) -> None:
        directory = self.run_dir(record.run_id)
        write_rows(directory / "metrics.csv", METRIC_COLUMNS, metric_rows(record))
        record.artifacts["metrics"] = str((directory / "metrics.csv").relative_to(self.root))

    def read_metrics(self, run_id: str) -> list[dict[str, Any]]:
        """Rows of a run's metrics.csv with numeric t and value."""
        path = self.run_dir(run_id) / "metrics.csv"
        if not path.exists():
            return []
        with open(path, "r", encoding="utf-8", newline="") as f:
            return [
                {
                    "run_id": r["run_id"],
                    "metric": r["metric"],
                    "t": int(r["t"]),
                    "value": float(r["value"]),
                }
                for r in csv.DictReader(f)
            ]

    def read_forecast_states(self, run_id: str) -> Optional[np.ndarray]:
        path = self.run_dir(run_id) / "forecast.csv"
        return read_states_csv(path, "estimate") if path.exists() else None

    # Manifest

    def load_manifest(self) -> dict[str, Any]:
        if not self.manifest_path.exists():
            return {"version": MANIFEST_VERSION, "runs": {}}
        manifest = read_json(self.manifest_path)
        manifest.setdefault("runs", {})
        return manifest

    def update_manifest(self, entries: Iterable[dict[str, Any]]) -> dict[str, Any]:
        """Merge run entries into the manifest and write it atomically."""
        manifest = self.load_manifest()
        for entry in entries:
            manifest["runs"][entry["run_id"]] = entry
        manifest["version"] = MANIFEST_VERSION
        write_json(self.manifest_path, manifest)
        return manifest

    def runs_with_status(self, *statuses: RunStatus) -> list[dict[str, Any]]:
        wanted = {s.value for s in statuses}
        runs = self.load_manifest()["runs"].values()
        return sorted((e for e in runs if e["status"] in wanted), key=lambda e: e["run_id"])

    # Aggregates

    def write_aggregate(self, stats: Iterable[AggregateStats]) -> Path:
        rows = [s.as_row() for s in stats]
        header = list(rows[0].keys()) if rows else ["metric", "count", "mean", "median", "q1", "q3"]
        write_rows(
            self.aggregate_path,
            header,
            ([_format(row[k]) for k in header] for row in rows),
        )
        return self.aggregate_path


def _format(value: Any) -> Any:
    return repr(float(value)) if isinstance(value, (float, np.floating)) else value


def metric_rows(record: RunRecord) -> Iterator[tuple[str, str, int, str]]:
    run_id = record.run_id
    for t, report in sorted(record.reconstruction.items()):
        for name, value in report.as_dict().items():
            yield (run_id, name, t, repr(float(value)))
    if record.forecast is not None:
        for name, series in record.forecast.series().items():
            for t, value in zip(record.forecast.steps, series):
                yield (run_id, name, int(t), repr(float(value)))
    if record.baseline is not None:
        for name, series in record.baseline.series().items():
            if name == "predicted_global":
                continue
            for t, value in zip(record.baseline.steps, series):
                yield (run_id, f"baseline_{name}", int(t), repr(float(value)))


def _save_npz(path: Path, arrays: dict[str, np.ndarray]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.stem + ".tmp.npz")
    np.savez_compressed(tmp, **arrays)
    tmp.replace(path)


def _json_safe(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items() if not isinstance(v, np.ndarray)}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value
