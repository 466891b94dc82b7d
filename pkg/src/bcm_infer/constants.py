"""Common constants used across bcm-infer."""

from enum import Enum


class Granularity(str, Enum):
    """Observation granularity."""

    EDGE = "edge"
    NODE = "node"
    GLOBAL = "global"


class Method(str, Enum):
    """Inference method."""

    DA = "da"
    LBI = "lbi"


# Default experiment grid
DEFAULT_EPSILONS = (0.2, 0.3)
DEFAULT_NOISE_LEVELS = (0.0, 1e-4, 2e-4, 4e-4, 8e-4, 16e-4)
DEFAULT_SEED_COUNT = 10
DEFAULT_N_AGENTS = 100
DEFAULT_HORIZON = 1000
DEFAULT_TRAIN_CUTOFF = 250
DEFAULT_MU = 1e-4

# Confidence bound used when inference is deliberately mis-specified
MISSPECIFIED_EPSILON = {0.2: 0.3, 0.3: 0.2}

REGIME_NAMES = {0.2: "polarization", 0.3: "consensus"}


def regime_name(epsilon: float) -> str:
    """Return the regime label for a confidence bound, or ``eps=<value>``."""
    return REGIME_NAMES.get(round(epsilon, 10), f"eps={epsilon:g}")


def swap_epsilon(epsilon: float, candidates: tuple[float, ...] | list[float] = ()) -> float:
    """
    Return the mis-specified confidence bound for ``epsilon``.

    The fixed polarization/consensus swap is used when it applies; otherwise the
    other value of a two-element candidate list.

    Raises:
        ValueError: If no swap partner exists
    """
    key = round(epsilon, 10)
    if key in MISSPECIFIED_EPSILON:
        return MISSPECIFIED_EPSILON[key]
    others = [c for c in candidates if round(c, 10) != key]
    if len(others) == 1:
        return others[0]
    raise ValueError(f"No mis-specification partner for epsilon={epsilon}")
