"""Experiment orchestration: grid, runs, persistence, sweep and aggregation."""

from .aggregate import aggregate, load_summaries, summarize_record
from .manager import Stage, SweepManager, SweepStats, run_sweep
from .models import (
    AggregateStats,
    RunRecord,
    RunSpec,
    RunStatus,
    ScenarioCell,
    ScenarioGrid,
    Specification,
    build_spec_matrix,
)
from .runner import (
    RunFailedError,
    RunSettings,
    generate_ground_truth,
    run_forecast,
    run_inference,
)
from .store import ResultStore, StoreError
from .telemetry import SweepMetrics

__all__ = [
    "AggregateStats",
    "ResultStore",
    "RunFailedError",
    "RunRecord",
    "RunSettings",
    "RunSpec",
    "RunStatus",
    "ScenarioCell",
    "ScenarioGrid",
    "Specification",
    "Stage",
    "StoreError",
    "SweepManager",
    "SweepMetrics",
    "SweepStats",
    "aggregate",
    "build_spec_matrix",
    "generate_ground_truth",
    "load_summaries",
    "run_forecast",
    "run_inference",
    "run_sweep",
    "summarize_record",
]
