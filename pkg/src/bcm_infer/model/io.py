"""Trajectory persistence: lossless archives, CSV exports and the JSON params sidecar."""

import csv
import json
from pathlib import Path
from typing import Any, Iterable, Optional

import numpy as np

from ..constants import Granularity
from .dynamics import pair_index
from .types import ModelParams, ObservationSeries, Trajectory


def write_json(path: Path, payload: dict[str, Any]) -> None:
    """Write JSON atomically (temp file + rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    tmp.replace(path)


def read_json(path: Path) -> dict[str, Any]:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def write_params_json(path: Path, params: ModelParams, extra: Optional[dict] = None) -> None:
    """JSON sidecar with ModelParams; floats are written with repr so they round-trip exactly."""
    payload: dict[str, Any] = {"params": params.model_dump(mode="json")}
    if extra:
        payload.update(extra)
    write_json(path, payload)


def read_params_json(path: Path) -> ModelParams:
    return ModelParams.model_validate(read_json(path)["params"])


def save_trajectory(path: Path, trajectory: Trajectory) -> None:
    """Lossless compressed archive of states and all observation series."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.stem + ".tmp.npz")
    np.savez_compressed(
        tmp,
        states=trajectory.states,
        edge=trajectory.series(Granularity.EDGE).values,
        node=trajectory.series(Granularity.NODE).values,
        total=trajectory.series(Granularity.GLOBAL).values,
        params=np.array(trajectory.params.model_dump_json()),
    )
    tmp.replace(path)


def load_trajectory(path: Path) -> Trajectory:
    with np.load(path, allow_pickle=False) as data:
        params = ModelParams.model_validate_json(str(data["params"]))
        return Trajectory(
            states=data["states"],
            observations={
                Granularity.EDGE: ObservationSeries(Granularity.EDGE, data["edge"]),
                Granularity.NODE: ObservationSeries(Granularity.NODE, data["node"]),
                Granularity.GLOBAL: ObservationSeries(Granularity.GLOBAL, data["total"]),
            },
            params=params,
        )


def write_rows(path: Path, header: Iterable[str], rows: Iterable[Iterable[Any]]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    tmp.replace(path)


def write_states_csv(
    path: Path,
    states: np.ndarray,
    spread: Optional[np.ndarray] = None,
    value_column: str = "opinion",
    first_step: int = 0,
) -> None:
    """
    Long-format state table: (t, agent, <value_column>[, spread]).

    Args:
        path: Output CSV
        states: Array (steps, N)
        spread: Optional per-step ensemble standard deviation, same shape
        value_column: Name of the value column ("opinion" or "estimate")
        first_step: Time index of the first row of ``states``
    """
    steps, n = states.shape
    header = ["t", "agent", value_column] + (["spread"] if spread is not None else [])

    def rows():
        for t in range(steps):
            for i in range(n):
                row = [first_step + t, i, repr(float(states[t, i]))]
                if spread is not None:
                    row.append(repr(float(spread[t, i])))
                yield row

    write_rows(path, header, rows())


def write_edges_csv(path: Path, edges: ObservationSeries) -> None:
    """Long-format edge indicator table: (t, i, j, indicator)."""
    n = int(round((1 + np.sqrt(1 + 8 * edges.dim)) / 2))
    rows_idx, cols_idx = pair_index(n)

    def rows():
        for t in range(len(edges)):
            values = edges.at(t)
            for k in range(edges.dim):
                yield (t, int(rows_idx[k]), int(cols_idx[k]), int(values[k]))

    write_rows(path, ["t", "i", "j", "indicator"], rows())


def read_states_csv(path: Path, value_column: str = "opinion") -> np.ndarray:
    """Read a long-format state table back into an array (steps, N)."""
    with open(path, "r", encoding="utf-8", newline="") as f:
        records = list(csv.DictReader(f))
    if not records:
        return np.empty((0, 0))
    steps = sorted({int(r["t"]) for r in records})
    agents = max(int(r["agent"]) for r in records) + 1
    first = steps[0]
    out = np.empty((len(steps), agents), dtype=np.float64)
    for r in records:
        out[int(r["t"]) - first, int(r["agent"])] = float(r[value_column])
    return out
