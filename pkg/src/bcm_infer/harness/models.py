"""
Data models for the experiment grid and its runs.
"""

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Annotated, Any, Iterable, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..constants import (
    DEFAULT_EPSILONS,
    DEFAULT_HORIZON,
    DEFAULT_MU,
    DEFAULT_N_AGENTS,
    DEFAULT_NOISE_LEVELS,
    DEFAULT_SEED_COUNT,
    DEFAULT_TRAIN_CUTOFF,
    Granularity,
    Method,
    swap_epsilon,
)
from ..inference.interface import Reconstruction
from ..metrics import ForecastReport, ReconstructionReport
from ..model.types import ModelParams


class Specification(str, Enum):
    """Whether inference assumes the true confidence bound."""

    CORRECT = "correct"
    MISSPECIFIED = "misspecified"


class RunStatus(str, Enum):
    """Lifecycle of a run in the manifest."""

    PENDING = "pending"
    INFERRED = "inferred"  # reconstruction persisted, forecast outstanding
    COMPLETED = "completed"
    FAILED = "failed"


def _canonical_hash(payload: dict[str, Any], length: int = 16) -> str:
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:length]


class ScenarioCell(BaseModel):
    """One ground-truth simulation of the grid."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    epsilon: float = Field(..., gt=0.0, le=1.0)
    noise_sigma: float = Field(..., ge=0.0)
    seed: int = Field(..., ge=0)
    n_agents: int = Field(..., ge=2)
    horizon: int = Field(..., ge=1)
    train_cutoff: int = Field(..., ge=0)
    mu: float = Field(..., ge=0.0, le=0.5)

    @property
    def cell_id(self) -> str:
        """Readable directory name with a short content hash."""
        digest = _canonical_hash(self.model_dump(mode="json"), 8)
        return f"eps{self.epsilon:g}_sigma{self.noise_sigma:g}_seed{self.seed}_{digest}"

    def model_params(self) -> ModelParams:
        return ModelParams(
            epsilon=self.epsilon,
            mu=self.mu,
            n_agents=self.n_agents,
            noise_sigma=self.noise_sigma,
            horizon=self.horizon,
            seed=self.seed,
        )


class ScenarioGrid(BaseModel):
    """Cartesian grid of confidence bounds, noise levels and seeds."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    epsilons: list[Annotated[float, Field(gt=0.0, le=1.0)]] = Field(
        default_factory=lambda: list(DEFAULT_EPSILONS)
    )
    noise_levels: list[Annotated[float, Field(ge=0.0)]] = Field(
        default_factory=lambda: list(DEFAULT_NOISE_LEVELS)
    )
    seeds: list[Annotated[int, Field(ge=0)]] = Field(
        default_factory=lambda: list(range(DEFAULT_SEED_COUNT))
    )
    n_agents: int = Field(DEFAULT_N_AGENTS, ge=2)
    horizon: int = Field(DEFAULT_HORIZON, ge=1)
    train_cutoff: int = Field(DEFAULT_TRAIN_CUTOFF, ge=0)
    mu: float = Field(DEFAULT_MU, ge=0.0, le=0.5)

    @model_validator(mode="after")
    def _check_cutoff(self) -> "ScenarioGrid":
        if self.train_cutoff >= self.horizon:
            raise ValueError(
                f"train_cutoff ({self.train_cutoff}) must be below horizon ({self.horizon})"
            )
        return self

    def __len__(self) -> int:
        return len(self.epsilons) * len(self.noise_levels) * len(self.seeds)

    def cells(self) -> list[ScenarioCell]:
        """Grid cells in (epsilon, noise, seed) order."""
        return [
            ScenarioCell(
                epsilon=eps,
                noise_sigma=sigma,
                seed=seed,
                n_agents=self.n_agents,
                horizon=self.horizon,
                train_cutoff=self.train_cutoff,
                mu=self.mu,
            )
            for eps in self.epsilons
            for sigma in self.noise_levels
            for seed in self.seeds
        ]


class RunSpec(BaseModel):
    """One inference run on one grid cell."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    cell: ScenarioCell
    method: Method
    granularity: Granularity = Granularity.EDGE
    specification: Specification = Specification.CORRECT
    epsilon_assumed: float = Field(..., gt=0.0, le=1.0)

    @model_validator(mode="after")
    def _check_lbi_edge(self) -> "RunSpec":
        if self.method is Method.LBI and self.granularity is not Granularity.EDGE:
            raise ValueError("likelihood-based inference only supports edge observations")
        return self

    @property
    def run_id(self) -> str:
        return _canonical_hash(self.model_dump(mode="json"))

    @property
    def label(self) -> str:
        return f"{self.method.value}/{self.granularity.value}/{self.specification.value}"

    def group_key(self) -> dict[str, Any]:
        """Fields that identify the aggregation group (everything but the seed)."""
        return {
            "method": self.method.value,
            "granularity": self.granularity.value,
            "specification": self.specification.value,
            "epsilon": self.cell.epsilon,
            "noise_sigma": self.cell.noise_sigma,
        }


def build_spec_matrix(
    grid: ScenarioGrid,
    methods: Iterable[Method] = (Method.LBI, Method.DA),
    granularities: Iterable[Granularity] = tuple(Granularity),
    specifications: Iterable[Specification] = tuple(Specification),
) -> list[RunSpec]:
    """
    Cross every grid cell with methods, granularities and specifications.

    Likelihood-based inference is paired with edge observations only, so the
    default matrix holds 2 + 6 runs per cell.
    """
    methods = [Method(m) for m in methods]
    granularities = [Granularity(g) for g in granularities]
    specifications = [Specification(s) for s in specifications]

    specs: list[RunSpec] = []
    for cell in grid.cells():
        for method in methods:
            for granularity in granularities:
                if method is Method.LBI and granularity is not Granularity.EDGE:
                    continue
                for specification in specifications:
                    if specification is Specification.CORRECT:
                        assumed = cell.epsilon
                    else:
                        assumed = swap_epsilon(cell.epsilon, grid.epsilons)
                    specs.append(
                        RunSpec(
                            cell=cell,
                            method=method,
                            granularity=granularity,
                            specification=specification,
                            epsilon_assumed=assumed,
                        )
                    )
    return specs


@dataclass
class RunRecord:
    """State and results of one run."""

    spec: RunSpec
    status: RunStatus = RunStatus.PENDING
    reconstruction: dict[int, ReconstructionReport] = field(default_factory=dict)
    forecast: Optional[ForecastReport] = None
    baseline: Optional[ForecastReport] = None
    estimates: Optional[np.ndarray] = None  # (train_cutoff + 1, N)
    forecast_states: Optional[np.ndarray] = None  # (horizon - train_cutoff + 1, N)
    result: Optional[Reconstruction] = None
    timing: dict[str, float] = field(default_factory=dict)
    artifacts: dict[str, str] = field(default_factory=dict)
    diagnostics: dict[str, Any] = field(default_factory=dict)
    error: Optional[str] = None

    @property
    def run_id(self) -> str:
        return self.spec.run_id

    def to_manifest_entry(self) -> dict[str, Any]:
        """Convert to dictionary for the sweep manifest."""
        entry: dict[str, Any] = {
            "run_id": self.run_id,
            "cell_id": self.spec.cell.cell_id,
            "spec": self.spec.model_dump(mode="json"),
            "status": self.status.value,
            "artifacts": dict(self.artifacts),
            "timing": {k: round(v, 6) for k, v in self.timing.items()},
        }
        if self.error:
            entry["error"] = self.error
        return entry


@dataclass(frozen=True)
class AggregateStats:
    """Boxplot statistics of one metric within one group."""

    key: tuple[tuple[str, Any], ...]
    metric: str
    count: int
    mean: float
    median: float
    q1: float
    q3: float

    def as_row(self) -> dict[str, Any]:
        row = dict(self.key)
        row.update(
            {
                "metric": self.metric,
                "count": self.count,
                "mean": self.mean,
                "median": self.median,
                "q1": self.q1,
                "q3": self.q3,
            }
        )
        return row
