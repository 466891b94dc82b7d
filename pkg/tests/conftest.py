"""Shared pytest fixtures for bcm-infer tests."""

from pathlib import Path

import numpy as np
import pytest

from bcm_infer.harness.models import ScenarioGrid
from bcm_infer.harness.runner import RunSettings, generate_ground_truth
from bcm_infer.harness.store import ResultStore
from bcm_infer.inference.enkf import FilterConfig
from bcm_infer.inference.lbi import LbiConfig
from bcm_infer.model.types import ModelParams


@pytest.fixture
def rng() -> np.random.Generator:
    """Fixed-seed generator for property checks."""
    return np.random.default_rng(20240601)


@pytest.fixture
def example_params() -> ModelParams:
    """Three agents, the hand-worked example of the update rule."""
    return ModelParams(epsilon=0.2, mu=0.1, n_agents=3, noise_sigma=0.0, horizon=1, seed=0)


@pytest.fixture
def small_params() -> ModelParams:
    """Six agents, short deterministic horizon, mu * N <= 1."""
    return ModelParams(epsilon=0.3, mu=0.01, n_agents=6, noise_sigma=0.0, horizon=20, seed=3)


@pytest.fixture
def tiny_grid() -> ScenarioGrid:
    """2 epsilons x 1 noise level x 2 seeds of a six-agent model."""
    return ScenarioGrid(
        epsilons=[0.2, 0.3],
        noise_levels=[0.0],
        seeds=[0, 1],
        n_agents=6,
        horizon=20,
        train_cutoff=8,
        mu=0.01,
    )


@pytest.fixture
def fast_filter() -> FilterConfig:
    return FilterConfig(ensemble_size=8, obs_noise_std=0.5, seed=1)


@pytest.fixture
def fast_lbi() -> LbiConfig:
    return LbiConfig(iterations=15, restarts=2, learning_rate=0.05, sharpness=20.0)


@pytest.fixture
def fast_settings(fast_filter: FilterConfig, fast_lbi: LbiConfig) -> RunSettings:
    return RunSettings(filter=fast_filter, lbi=fast_lbi, snapshot={"test": True})


@pytest.fixture
def store(tmp_path: Path) -> ResultStore:
    """Empty, initialized result store in a temporary directory."""
    result_store = ResultStore(tmp_path / "out")
    result_store.initialize()
    return result_store


@pytest.fixture
def simulated_store(store: ResultStore, tiny_grid: ScenarioGrid) -> ResultStore:
    """Result store holding the ground truth of ``tiny_grid``."""
    generate_ground_truth(tiny_grid, store)
    return store
