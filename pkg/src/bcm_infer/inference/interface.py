"""Abstract interface for latent-state estimators."""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from ..constants import Method
from ..model.types import ModelParams, ObservationSeries


@dataclass
class Reconstruction:
    """Inferred latent states over the training window."""

    method: Method
    estimates: np.ndarray  # (T_train + 1, N)
    spread: Optional[np.ndarray] = None  # per-step ensemble std, DA only
    ensemble: Optional[np.ndarray] = None  # final members (N_e, N), DA only
    diagnostics: dict[str, Any] = field(default_factory=dict)

    @property
    def final_state(self) -> np.ndarray:
        return self.estimates[-1]


@dataclass
class ForecastPath:
    """Out-of-sample forecast started from a reconstruction."""

    states: np.ndarray  # point trajectory, row 0 is the reconstruction at the cutoff
    probabilities: np.ndarray  # (steps, E) interaction probabilities for t > cutoff


class LatentStateEstimator(ABC):
    """Abstract base class for inference engines."""

    method: Method

    @abstractmethod
    def reconstruct(self, observations: ObservationSeries, params: ModelParams) -> Reconstruction:
        """
        Infer the latent opinions for every observed step.

        Args:
            observations: Observations for steps 0..T_train
            params: Known model parameters of the data (``mu``, ``n_agents``)

        Returns:
            Reconstruction covering the same steps
        """
        pass

    @abstractmethod
    def forecast(
        self, reconstruction: Reconstruction, params: ModelParams, steps: int
    ) -> ForecastPath:
        """
        Run the noise-free model forward from the reconstruction.

        Args:
            reconstruction: Output of :meth:`reconstruct`
            params: Known model parameters
            steps: Number of steps past the cutoff

        Returns:
            ForecastPath with ``steps + 1`` states and ``steps`` probability rows
        """
        pass
