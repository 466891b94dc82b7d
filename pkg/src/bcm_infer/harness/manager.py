"""
Sweep manager: a bounded worker pool over independent runs.
"""

import asyncio
import logging
import time
from concurrent.futures import Executor, ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Iterable, Optional

from .models import RunSpec, RunStatus
from .runner import RunSettings, execute_run, forecast_job, infer_job
from .store import ResultStore
from .telemetry import SweepMetrics

logger = logging.getLogger(__name__)


class Stage(str, Enum):
    """Which part of a run to execute."""

    INFER = "infer"
    FORECAST = "forecast"
    FULL = "full"  # inference then forecast


_JOBS: dict[Stage, Callable[[str, RunSpec, RunSettings], dict[str, Any]]] = {
    Stage.INFER: infer_job,
    Stage.FORECAST: forecast_job,
    Stage.FULL: execute_run,
}

# Statuses after which a stage has nothing left to do
_DONE: dict[Stage, set[str]] = {
    Stage.INFER: {RunStatus.INFERRED.value, RunStatus.COMPLETED.value},
    Stage.FORECAST: {RunStatus.COMPLETED.value},
    Stage.FULL: {RunStatus.COMPLETED.value},
}


@dataclass
class SweepStats:
    """Counters of one sweep."""

    submitted: int = 0
    completed: int = 0
    failed: int = 0
    skipped: int = 0
    failures: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "submitted": self.submitted,
            "completed": self.completed,
            "failed": self.failed,
            "skipped": self.skipped,
        }


def pending_specs(
    store: ResultStore, specs: Iterable[RunSpec], stage: Stage
) -> tuple[list[RunSpec], list[RunSpec]]:
    """
    Split specs into those still to run and those already done for ``stage``.

    Forecasting only considers runs whose inference has been persisted.
    """
    runs = store.load_manifest()["runs"]
    todo, skipped = [], []
    for spec in specs:
        status = runs.get(spec.run_id, {}).get("status")
        if status in _DONE[stage]:
            skipped.append(spec)
        elif stage is Stage.FORECAST and status != RunStatus.INFERRED.value:
            skipped.append(spec)
        else:
            todo.append(spec)
    return todo, skipped


class SweepManager:
    """
    Executes runs on a worker pool and keeps the manifest current.

    Jobs run in a process pool (a single thread when ``workers`` is 1); only
    this coordinator writes the manifest.
    """

    def __init__(
        self,
        store: ResultStore,
        settings: RunSettings,
        workers: int = 1,
        metrics: Optional[SweepMetrics] = None,
    ):
        """
        Initialize the sweep manager.

        Args:
            store: Result store of the sweep
            settings: Inference settings for every run
            workers: Maximum number of concurrent runs
            metrics: Telemetry collector (optional)
        """
        self.store = store
        self.settings = settings
        self.workers = max(1, workers)
        self.metrics = metrics

        self._queue: asyncio.Queue[tuple[RunSpec, Stage]] = asyncio.Queue()
        self._executor: Optional[Executor] = None
        self._tasks: list[asyncio.Task] = []
        self._entries: list[dict[str, Any]] = []
        self._stats = SweepStats()

    def _make_executor(self) -> Executor:
        if self.workers > 1:
            return ProcessPoolExecutor(max_workers=self.workers)
        return ThreadPoolExecutor(max_workers=1)

    async def start(self) -> None:
        """Start the executor and worker tasks."""
        if self._executor is None:
            logger.info("Starting sweep workers", extra={"workers": self.workers})
            self._executor = self._make_executor()
            self._tasks = [asyncio.create_task(self._worker(i)) for i in range(self.workers)]

    async def stop(self) -> None:
        """Cancel worker tasks and shut the executor down."""
        for task in self._tasks:
            task.cancel()
        for task in self._tasks:
            try:
                await task
            except asyncio.CancelledError:
                pass
        self._tasks = []
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None
        logger.debug("Sweep workers stopped")

    async def enqueue(self, spec: RunSpec, stage: Stage) -> None:
        self._stats.submitted += 1
        await self._queue.put((spec, stage))

    async def join(self) -> None:
        await self._queue.join()

    async def _worker(self, index: int) -> None:
        loop = asyncio.get_running_loop()
        while True:
            spec, stage = await self._queue.get()
            try:
                await self._process(index, spec, stage, loop)
            finally:
                self._queue.task_done()

    async def _process(
        self, index: int, spec: RunSpec, stage: Stage, loop: asyncio.AbstractEventLoop
    ) -> None:
        started = time.perf_counter()
        if self.metrics:
            self.metrics.run_started()
        logger.debug(
            f"Starting {stage.value} for {spec.label}",
            extra={"run_id": spec.run_id, "worker": index},
        )
        try:
            entry = await loop.run_in_executor(
                self._executor, _JOBS[stage], str(self.store.root), spec, self.settings
            )
        except Exception as e:
            # a worker process died or the job could not be pickled
            logger.error(f"Error executing run: {e}", extra={"run_id": spec.run_id}, exc_info=True)
            entry = {
                "run_id": spec.run_id,
                "cell_id": spec.cell.cell_id,
                "spec": spec.model_dump(mode="json"),
                "status": RunStatus.FAILED.value,
                "artifacts": {},
                "timing": {},
                "error": str(e),
            }
        finally:
            if self.metrics:
                self.metrics.run_finished()

        seconds = time.perf_counter() - started
        try:
            self._record(spec, entry, seconds)
        except Exception as e:
            logger.error(f"Error recording run: {e}", extra={"run_id": spec.run_id}, exc_info=True)
            self._stats.failed += 1
            self._stats.failures.append(f"{spec.run_id}: could not record result: {e}")
            if self.metrics:
                self.metrics.record_run(
                    spec.method.value, spec.granularity.value, RunStatus.FAILED.value, seconds
                )

    def _record(self, spec: RunSpec, entry: dict[str, Any], seconds: float) -> None:
        self.store.update_manifest([entry])
        self._entries.append(entry)
        status = entry["status"]
        if status == RunStatus.FAILED.value:
            self._stats.failed += 1
            self._stats.failures.append(f"{spec.run_id}: {entry.get('error', 'unknown error')}")
        else:
            self._stats.completed += 1
        if self.metrics:
            self.metrics.record_run(spec.method.value, spec.granularity.value, status, seconds)

    def get_stats(self) -> SweepStats:
        return self._stats

    async def run(
        self, specs: Iterable[RunSpec], stage: Stage = Stage.FULL
    ) -> list[dict[str, Any]]:
        """
        Execute every spec not yet done for ``stage``.

        Returns:
            Manifest entries of the runs executed in this call
        """
        specs = list(specs)
        todo, skipped = pending_specs(self.store, specs, stage)
        self._stats.skipped += len(skipped)
        for spec in skipped:
            logger.debug(f"Skipping {spec.label}, already done", extra={"run_id": spec.run_id})
        if not todo:
            logger.info("No pending runs", extra={"skipped": len(skipped)})
            return []

        if stage is not Stage.FORECAST:
            known = self.store.load_manifest()["runs"]
            self.store.update_manifest(
                {
                    "run_id": s.run_id,
                    "cell_id": s.cell.cell_id,
                    "spec": s.model_dump(mode="json"),
                    "status": RunStatus.PENDING.value,
                    "artifacts": {},
                    "timing": {},
                }
                for s in todo
                if s.run_id not in known
            )

        logger.info(
            f"Running {len(todo)} {stage.value} jobs",
            extra={"skipped": len(skipped), "workers": self.workers},
        )
        await self.start()
        try:
            for spec in todo:
                await self.enqueue(spec, stage)
            await self.join()
        finally:
            await self.stop()
        return list(self._entries)


def run_sweep(
    store: ResultStore,
    specs: Iterable[RunSpec],
    settings: RunSettings,
    stage: Stage = Stage.FULL,
    workers: int = 1,
    metrics: Optional[SweepMetrics] = None,
) -> tuple[list[dict[str, Any]], SweepStats]:
    """Synchronous entry point: run a sweep to completion."""
    manager = SweepManager(store, settings, workers=workers, metrics=metrics)
    entries = asyncio.run(manager.run(specs, stage))
    return entries, manager.get_stats()
