"""Per-run summaries and group statistics (mean, median, quartiles)."""

import logging
from collections import defaultdict
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from ..metrics import (
    FORECAST_METRICS,
    RECONSTRUCTION_METRICS,
    Baseline,
    ZeroBaselineError,
    normalize_errors,
)
from .models import AggregateStats, RunRecord, RunSpec, RunStatus
from .store import ResultStore, metric_rows

logger = logging.getLogger(__name__)

GROUP_KEYS = ("method", "granularity", "specification", "epsilon", "noise_sigma")

# Forecast metrics that have a constant-predictor counterpart
NORMALIZABLE = ("f_edge", "f_node", "f_global", "brier")


def summarize_rows(
    rows: Iterable[dict[str, Any] | Sequence], train_cutoff: int
) -> dict[str, float]:
    """
    Collapse a run's metric rows into one value per metric.

    Reconstruction errors are reported at the cutoff (``e_symm``) and at t = 0
    (``e_symm_t0``); forecast series are averaged uniformly over time.
    """
    series: dict[str, list[float]] = defaultdict(list)
    summary: dict[str, float] = {}
    for row in rows:
        if isinstance(row, dict):
            metric, t, value = row["metric"], int(row["t"]), float(row["value"])
        else:
            _, metric, t, value = row
            t, value = int(t), float(value)
        if metric in RECONSTRUCTION_METRICS:
            if t == train_cutoff:
                summary[metric] = value
            if t == 0:
                summary[f"{metric}_t0"] = value
        elif metric != "predicted_global":
            series[metric].append(value)
    for metric, values in series.items():
        summary[metric] = float(np.mean(values))
    return summary


def summarize_record(record: RunRecord) -> dict[str, Any]:
    """Summary of an in-memory run."""
    values = summarize_rows(metric_rows(record), record.spec.cell.train_cutoff)
    return _with_key(record.spec, values)


def _with_key(spec: RunSpec, values: dict[str, float]) -> dict[str, Any]:
    out: dict[str, Any] = {"run_id": spec.run_id, "seed": spec.cell.seed}
    out.update(spec.group_key())
    out.update(values)
    return out


def load_summaries(store: ResultStore) -> list[dict[str, Any]]:
    """Summaries of every completed run in the manifest, ordered by run_id."""
    summaries = []
    for entry in store.runs_with_status(RunStatus.COMPLETED):
        spec = RunSpec.model_validate(entry["spec"])
        values = summarize_rows(store.read_metrics(spec.run_id), spec.cell.train_cutoff)
        summaries.append(_with_key(spec, values))
    return summaries


def normalize_summary(
    summary: dict[str, Any], baseline: Baseline | str = Baseline.NONE
) -> dict[str, Any]:
    """Add ``<metric>_norm`` entries dividing forecast errors by the baseline's."""
    baseline = Baseline(baseline)
    if baseline is Baseline.NONE:
        return summary
    out = dict(summary)
    for metric in NORMALIZABLE:
        reference = summary.get(f"baseline_{metric}")
        if metric not in summary or reference is None:
            continue
        try:
            out[f"{metric}_norm"] = float(
                normalize_errors(summary[metric], baseline, reference)
            )
        except ZeroBaselineError:
            logger.warning(
                f"Baseline {metric} is zero, skipping normalisation",
                extra={"run_id": summary.get("run_id")},
            )
    return out


def aggregate(
    summaries: Iterable[dict[str, Any]],
    group_by: Sequence[str] = GROUP_KEYS,
    metrics: Optional[Sequence[str]] = None,
) -> list[AggregateStats]:
    """
    Boxplot statistics per group and metric.

    Quartiles use linear interpolation between order statistics. Groups with no
    finite values for a metric are omitted with a warning.
    """
    groups: dict[tuple, list[dict[str, Any]]] = defaultdict(list)
    for summary in summaries:
        key = tuple((name, summary[name]) for name in group_by)
        groups[key].append(summary)

    if not groups:
        logger.warning("No completed runs to aggregate")
        return []

    if metrics is None:
        names = set()
        for members in groups.values():
            for summary in members:
                names.update(k for k, v in summary.items() if isinstance(v, float))
        names -= set(group_by)
        names.discard("epsilon")
        names.discard("noise_sigma")
        metrics = sorted(names)

    stats = []
    for key in sorted(groups, key=_sort_key):
        members = groups[key]
        for metric in metrics:
            values = np.array(
                [m[metric] for m in members if metric in m and np.isfinite(m[metric])],
                dtype=np.float64,
            )
            if values.size == 0:
                logger.warning(f"Empty group for {metric}, omitted", extra={"group": dict(key)})
                continue
            q1, median, q3 = np.quantile(values, [0.25, 0.5, 0.75], method="linear")
            stats.append(
                AggregateStats(
                    key=key,
                    metric=metric,
                    count=int(values.size),
                    mean=float(values.mean()),
                    median=float(median),
                    q1=float(q1),
                    q3=float(q3),
                )
            )
    return stats


def _sort_key(key: tuple) -> tuple:
    return tuple((name, str(value)) for name, value in key)


def default_metrics() -> list[str]:
    """Metrics written to aggregate.csv."""
    recon = list(RECONSTRUCTION_METRICS) + [f"{m}_t0" for m in RECONSTRUCTION_METRICS]
    forecast = list(FORECAST_METRICS) + [f"baseline_{m}" for m in FORECAST_METRICS]
    return recon + forecast
