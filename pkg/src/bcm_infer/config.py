"""Configuration management with CLI args, environment variables, a JSON file and defaults."""

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .harness.models import ScenarioGrid
from .inference.enkf import FilterConfig
from .inference.lbi import LbiConfig
from .metrics import Baseline

logger = logging.getLogger(__name__)

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")
LOG_FORMATS = ("json", "text")

# Top-level keys accepted in the JSON config file
FILE_KEYS = frozenset(
    {
        "grid",
        "filter",
        "lbi",
        "out",
        "workers",
        "log_level",
        "log_format",
        "telemetry",
        "export_edges",
        "baseline",
    }
)


class ConfigError(ValueError):
    """Raised for unreadable config files and out-of-range scalar settings."""

    pass


@dataclass
class AppConfig:
    """Application configuration."""

    # === Experiment ===
    grid: ScenarioGrid = field(default_factory=ScenarioGrid)
    filter: FilterConfig = field(default_factory=FilterConfig)
    lbi: LbiConfig = field(default_factory=LbiConfig)

    # === Output ===
    out: str = "./results"
    export_edges: bool = False
    telemetry: bool = True
    baseline: str = Baseline.NONE.value

    # === Execution ===
    workers: int = 1

    # === Logging ===
    log_level: str = "INFO"
    log_format: str = "text"  # json|text

    @classmethod
    def load(
        cls, cli_args: Optional[dict[str, Any]] = None, config_path: Optional[str] = None
    ) -> "AppConfig":
        """
        Resolve configuration.

        Priority: CLI args > Environment variables > JSON file > Defaults

        Args:
            cli_args: Command-line values; ``None`` entries are ignored. Grid
                overrides use ``epsilons``, ``noise_levels`` and ``seeds`` (a count).
            config_path: Optional JSON config file

        Raises:
            ConfigError: If the file is unreadable or a scalar is out of range
            pydantic.ValidationError: If a model section is invalid
        """
        cli_args = {k: v for k, v in (cli_args or {}).items() if v is not None}
        data = _read_file(config_path) if config_path else {}

        def get_value(key: str, env_var: Optional[str], default: Any, type_converter=str) -> Any:
            if key in cli_args:
                return cli_args[key]
            env_value = os.getenv(env_var) if env_var else None
            if env_value is not None:
                if type_converter is bool:
                    return env_value.lower() in ("true", "1", "yes", "on")
                try:
                    return type_converter(env_value)
                except ValueError as e:
                    raise ConfigError(f"{env_var}: {e}") from e
            return data.get(key, default)

        grid_data = dict(data.get("grid", {}))
        if "epsilons" in cli_args:
            grid_data["epsilons"] = list(cli_args["epsilons"])
        if "noise_levels" in cli_args:
            grid_data["noise_levels"] = list(cli_args["noise_levels"])
        if "seeds" in cli_args:
            grid_data["seeds"] = list(range(int(cli_args["seeds"])))

        config = cls(
            grid=ScenarioGrid.model_validate(grid_data),
            filter=FilterConfig.model_validate(data.get("filter", {})),
            lbi=LbiConfig.model_validate(data.get("lbi", {})),
        )
        config.out = str(get_value("out", "BCM_INFER_OUT", config.out))
        config.workers = get_value("workers", "BCM_INFER_WORKERS", config.workers, int)
        config.log_level = str(
            get_value("log_level", "BCM_INFER_LOG_LEVEL", config.log_level)
        ).upper()
        config.log_format = str(
            get_value("log_format", "BCM_INFER_LOG_FORMAT", config.log_format)
        ).lower()
        config.telemetry = bool(get_value("telemetry", None, config.telemetry, bool))
        config.export_edges = bool(get_value("export_edges", None, config.export_edges, bool))
        config.baseline = str(get_value("baseline", None, config.baseline))
        config.validate()
        return config

    def validate(self) -> None:
        """
        Check the scalar settings.

        Raises:
            ConfigError: On the first invalid value
        """
        if not isinstance(self.workers, int) or self.workers < 1:
            raise ConfigError(f"workers: must be a positive integer, got {self.workers!r}")
        if self.log_level not in LOG_LEVELS:
            raise ConfigError(f"log_level: must be one of {', '.join(LOG_LEVELS)}")
        if self.log_format not in LOG_FORMATS:
            raise ConfigError(f"log_format: must be one of {', '.join(LOG_FORMATS)}")
        try:
            Baseline(self.baseline)
        except ValueError as e:
            choices = ", ".join(b.value for b in Baseline)
            raise ConfigError(f"baseline: must be one of {choices}") from e

    def to_dict(self) -> dict[str, Any]:
        """Fully resolved configuration as JSON-ready data."""
        return {
            "grid": self.grid.model_dump(mode="json"),
            "filter": self.filter.model_dump(mode="json"),
            "lbi": self.lbi.model_dump(mode="json"),
            "out": self.out,
            "workers": self.workers,
            "log_level": self.log_level,
            "log_format": self.log_format,
            "telemetry": self.telemetry,
            "export_edges": self.export_edges,
            "baseline": self.baseline,
        }

    def display(self) -> str:
        """
        Display configuration in human-readable format.

        Returns:
            Formatted configuration string
        """
        grid = self.grid
        return "\n".join(
            [
                "Configuration:",
                "  Grid:",
                f"    Epsilons: {', '.join(f'{e:g}' for e in grid.epsilons)}",
                f"    Noise Levels: {', '.join(f'{s:g}' for s in grid.noise_levels)}",
                f"    Seeds: {len(grid.seeds)}",
                f"    Agents: {grid.n_agents}",
                f"    Horizon: {grid.horizon} (cutoff {grid.train_cutoff})",
                f"    Mu: {grid.mu:g}",
                "  Filter:",
                f"    Ensemble Size: {self.filter.ensemble_size}",
                f"    Noise (model/obs): {self.filter.model_noise_std:g}/"
                f"{self.filter.obs_noise_std:g}",
                f"    Perturbation: {self.filter.perturbation.value}",
                "  LBI:",
                f"    Iterations: {self.lbi.iterations} x {self.lbi.restarts} restarts",
                f"    Learning Rate: {self.lbi.learning_rate:g}",
                f"    Sharpness: {self.lbi.sharpness:g}",
                "  Output:",
                f"    Directory: {self.out}",
                f"    Edge CSV: {'Enabled' if self.export_edges else 'Disabled'}",
                f"    Telemetry: {'Enabled' if self.telemetry else 'Disabled'}",
                f"    Baseline: {self.baseline}",
                f"  Workers: {self.workers}",
                "  Logging:",
                f"    Level: {self.log_level}",
                f"    Format: {self.log_format}",
            ]
        )


def _read_file(path: str) -> dict[str, Any]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"Cannot read config file {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config file {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"Config file {path} must hold a JSON object")
    unknown = sorted(set(data) - FILE_KEYS)
    if unknown:
        raise ConfigError(f"Unknown config keys in {path}: {', '.join(unknown)}")
    logger.debug(f"Loaded config file {path}")
    return data
