"""Latent-state inference: ensemble Kalman filtering and likelihood-based inference."""

from .adam import AdamOptimizer
from .enkf import (
    DegenerateEnsembleError,
    EnkfEstimator,
    Ensemble,
    EnsembleSizeError,
    FilterConfig,
    FilterError,
    FilterResult,
    Perturbation,
    analysis_step,
    assimilate,
    forecast_step,
    init_ensemble,
    kalman_gain,
)
from .interface import ForecastPath, LatentStateEstimator, Reconstruction
from .lbi import (
    InferenceAbortedError,
    LbiConfig,
    LbiEstimator,
    LbiResult,
    RolloutTape,
    gradient,
    infer,
    interaction_logits,
    loss,
    rollout,
    surrogate_loss,
)

__all__ = [
    "AdamOptimizer",
    "DegenerateEnsembleError",
    "EnkfEstimator",
    "Ensemble",
    "EnsembleSizeError",
    "FilterConfig",
    "FilterError",
    "FilterResult",
    "ForecastPath",
    "InferenceAbortedError",
    "LatentStateEstimator",
    "LbiConfig",
    "LbiEstimator",
    "LbiResult",
    "Perturbation",
    "Reconstruction",
    "RolloutTape",
    "analysis_step",
    "assimilate",
    "forecast_step",
    "gradient",
    "infer",
    "init_ensemble",
    "interaction_logits",
    "kalman_gain",
    "loss",
    "rollout",
    "surrogate_loss",
]
