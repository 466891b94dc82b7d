"""Prometheus sweep metrics, exported as a node-exporter textfile."""

import logging
from pathlib import Path

from prometheus_client import CollectorRegistry, Counter, Gauge, Histogram, write_to_textfile

logger = logging.getLogger(__name__)


class SweepMetrics:
    """Collects run counts and durations of a sweep."""

    def __init__(self, registry: CollectorRegistry | None = None):
        """
        Initialize metrics.

        Args:
            registry: Registry to register with; a private one by default so
                repeated sweeps in one process do not clash
        """
        self.registry = registry or CollectorRegistry()

        self.runs_total = Counter(
            "bcm_runs_total",
            "Runs finished by method, granularity and status",
            ["method", "granularity", "status"],
            registry=self.registry,
        )

        self.run_duration_seconds = Histogram(
            "bcm_run_duration_seconds",
            "Wall-clock seconds per run",
            ["method"],
            buckets=[0.1, 1.0, 5.0, 15.0, 30.0, 60.0, 120.0, 300.0, 600.0, 1800.0],
            registry=self.registry,
        )

        self.runs_in_flight = Gauge(
            "bcm_runs_in_flight", "Runs currently executing", registry=self.registry
        )

        self.trajectories_total = Counter(
            "bcm_trajectories_total", "Ground-truth trajectories generated", registry=self.registry
        )

    def record_run(self, method: str, granularity: str, status: str, seconds: float) -> None:
        """Record a finished run."""
        self.runs_total.labels(method=method, granularity=granularity, status=status).inc()
        if seconds > 0:
            self.run_duration_seconds.labels(method=method).observe(seconds)

    def record_trajectories(self, count: int) -> None:
        self.trajectories_total.inc(count)

    def run_started(self) -> None:
        self.runs_in_flight.inc()

    def run_finished(self) -> None:
        self.runs_in_flight.dec()

    def write(self, path: str | Path) -> Path:
        """Write the registry in text exposition format."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        write_to_textfile(str(path), self.registry)
        logger.debug(f"Wrote sweep metrics to {path}")
        return path
