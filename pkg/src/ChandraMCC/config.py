"""Configuration management for ChandraMCC.

This module provides the ConfigManager class for loading and saving
experiment settings to a JSON configuration file and for applying
command-line overrides on top of them.
"""

from __future__ import annotations

import json
import logging
from dataclasses import replace
from pathlib import Path
from typing import Any, TypedDict

import numpy as np

from .bench import PROTOCOLS, ExperimentConfig
from .core import FilterSpec
from .exceptions import ConfigurationError, SchemaError
from .filters import ADAPTIVE_LAMBDA, KernelStrategy, steady_state_covariance
from .statespace import (
    SATELLITE_PI0,
    LtiModel,
    ShotNoiseSpec,
    load_model,
    model_from_json,
    satellite_model,
)

__all__ = [
    "CONFIG_KEYS",
    "OVERRIDE_KEYS",
    "PI0_CHOICES",
    "DEFAULT_FILTERS",
    "BENCHMARK_MAGNITUDES",
    "ModelPreset",
    "ConfigManager",
]

logger = logging.getLogger(__name__)

CONFIG_KEYS: frozenset[str] = frozenset(
    {
        "model",
        "shot",
        "N",
        "runs",
        "base_seed",
        "filters",
        "timing_repeats",
        "timing_warmup",
        "parallel",
        "seed",
        "protocol",
    }
)
OVERRIDE_KEYS: frozenset[str] = frozenset(
    {"seed", "runs", "q4", "pi0", "lambda", "sigma", "filters", "parallel", "protocol"}
)
PI0_CHOICES: tuple[str, ...] = ("benchmark", "zero", "steady")
DEFAULT_FILTERS: tuple[str, ...] = ("kf", "imcc-riccati", "alg1", "alg2", "alg3", "alg4")
# impulses of the benchmark are nonzero: a corrupted sample always carries an outlier
BENCHMARK_MAGNITUDES: tuple[float, ...] = (1.0, 2.0, 3.0)


class ModelPreset(TypedDict):
    """The built-in satellite model and how its prior is chosen."""

    preset: str
    q4: float
    pi0: str


def _int_setting(data: dict[str, Any], key: str, default: int) -> int:
    value = data.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigurationError(f"Invalid {key}: {value!r}. Must be an integer.")
    return value


class ConfigManager:
    """Manages loading and saving of experiment configuration.

    Attributes:
        config_file: Path of the last loaded or saved file, if any.
        model_config: A :class:`ModelPreset`, a model file path, or an inline model.
        shot: Impulsive-noise protocol.
        N: Transitions per trajectory.
        runs: Monte-Carlo runs.
        base_seed: Seed of the first Monte-Carlo run.
        seed: Seed for ``simulate``.
        filters: Filters to run.
        timing_repeats: Timed executions per filter and run.
        timing_warmup: Untimed executions before timing.
        parallel: Worker processes for ``bench``.
        protocol: Scoring protocol of ``bench``.
    """

    def __init__(self, config_file: str | None = None) -> None:
        """Initialize the ConfigManager with the benchmark defaults.

        Args:
            config_file: Optional file to load immediately.
        """
        self.config_file: str | None = None
        self.model_config: ModelPreset | str | dict[str, Any] = {
            "preset": "satellite",
            "q4": 0.63e-2,
            "pi0": "benchmark",
        }
        self.shot: ShotNoiseSpec = ShotNoiseSpec(magnitudes=BENCHMARK_MAGNITUDES)
        self.N: int = 300
        self.runs: int = 500
        self.base_seed: int = 0
        self.seed: int = 0
        self.filters: list[FilterSpec] = [FilterSpec(name) for name in DEFAULT_FILTERS]
        self.timing_repeats: int = 1
        self.timing_warmup: int = 0
        self.parallel: int = 1
        self.protocol: str = "published"
        if config_file is not None:
            self.load_config(config_file)

    # --- LOADING ---

    def load_config(self, path: str | Path) -> None:
        """Load settings from a JSON file on top of the current ones.

        Raises:
            ConfigurationError: If the file is missing, unreadable or invalid.
        """
        config_path = Path(path)
        if not config_path.is_file():
            raise ConfigurationError(f"Config file not found: {config_path}")
        try:
            with open(config_path, encoding="utf-8") as f:
                data: Any = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"Error parsing config file {config_path}: {e}") from e
        except OSError as e:
            raise ConfigurationError(f"Error reading config file {config_path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigurationError(f"Config file {config_path} must hold a JSON object.")

        unknown = set(data) - CONFIG_KEYS
        if unknown:
            raise ConfigurationError(f"Unknown config keys: {', '.join(sorted(unknown))}.")

        self.config_file = str(config_path)
        self._load_model_config(data, config_path.parent)
        self._load_shot_config(data)
        self._load_run_settings(data)
        self._load_filters(data)
        self._load_timing(data)
        logger.info("Loaded configuration from %s", config_path)

    def _load_model_config(self, data: dict[str, Any], base_dir: Path) -> None:
        """Load the model entry: preset, file path or inline matrices.

        Args:
            data: The loaded configuration dictionary.
            base_dir: Directory relative model paths are resolved against.
        """
        model = data.get("model")
        if model is None:
            return
        if isinstance(model, str):
            candidate = Path(model)
            if not candidate.is_absolute() and not candidate.exists():
                candidate = base_dir / candidate
            self.model_config = str(candidate)
        elif isinstance(model, dict) and "preset" in model:
            unknown = set(model) - {"preset", "q4", "pi0"}
            if unknown:
                raise ConfigurationError(f"Unknown preset keys: {', '.join(sorted(unknown))}.")
            if model["preset"] != "satellite":
                raise ConfigurationError(
                    f"Invalid preset: {model['preset']}. Must be 'satellite'."
                )
            preset: ModelPreset = {
                "preset": "satellite",
                "q4": float(model.get("q4", 0.63e-2)),
                "pi0": str(model.get("pi0", "benchmark")),
            }
            self._check_preset(preset)
            self.model_config = preset
        elif isinstance(model, dict):
            self.model_config = dict(model)
        else:
            raise ConfigurationError(f"Invalid model entry: {model!r}.")

    def _load_shot_config(self, data: dict[str, Any]) -> None:
        """Load the impulsive-noise protocol; missing keys keep the current values.

        Args:
            data: The loaded configuration dictionary.
        """
        shot = data.get("shot")
        if shot is None:
            return
        if not isinstance(shot, dict):
            raise ConfigurationError(f"Invalid shot entry: {shot!r}. Must be an object.")
        try:
            self.shot = ShotNoiseSpec.from_json({**self.shot.to_json(), **shot})
        except TypeError as e:
            raise ConfigurationError(f"Invalid shot entry: {e}") from e

    def _load_run_settings(self, data: dict[str, Any]) -> None:
        """Load trajectory length, run count and seeds.

        Args:
            data: The loaded configuration dictionary.
        """
        self.N = _int_setting(data, "N", self.N)
        self.runs = _int_setting(data, "runs", self.runs)
        self.base_seed = _int_setting(data, "base_seed", self.base_seed)
        self.seed = _int_setting(data, "seed", self.seed)
        self.parallel = _int_setting(data, "parallel", self.parallel)
        self.protocol = self._check_protocol(data.get("protocol", self.protocol))

    def _load_filters(self, data: dict[str, Any]) -> None:
        """Load the filter list.

        Args:
            data: The loaded configuration dictionary.
        """
        filters = data.get("filters")
        if filters is None:
            return
        if not isinstance(filters, list) or not filters:
            raise ConfigurationError("Invalid filters: must be a non-empty list.")
        self.filters = [FilterSpec.from_json(f) for f in filters]

    def _load_timing(self, data: dict[str, Any]) -> None:
        """Load timing repeats and warm-up.

        Args:
            data: The loaded configuration dictionary.
        """
        self.timing_repeats = _int_setting(data, "timing_repeats", self.timing_repeats)
        self.timing_warmup = _int_setting(data, "timing_warmup", self.timing_warmup)

    # --- OVERRIDES ---

    def apply_overrides(self, overrides: dict[str, Any]) -> None:
        """Apply command-line overrides after loading.

        ``None`` values are skipped. ``filters`` is applied before
        ``lambda`` / ``sigma`` so the strategy reaches every listed filter.

        Raises:
            ConfigurationError: On unknown keys or invalid values.
        """
        unknown = set(overrides) - OVERRIDE_KEYS
        if unknown:
            raise ConfigurationError(f"Unknown override keys: {', '.join(sorted(unknown))}.")
        given = {k: v for k, v in overrides.items() if v is not None}

        for key in ("seed", "runs", "parallel"):
            if key in given:
                setattr(self, key, _int_setting(given, key, 0))
        if "protocol" in given:
            self.protocol = self._check_protocol(given["protocol"])
        if "q4" in given or "pi0" in given:
            if not isinstance(self.model_config, dict) or "preset" not in self.model_config:
                raise ConfigurationError("q4 and pi0 overrides require the satellite preset.")
            preset: ModelPreset = {
                "preset": "satellite",
                "q4": float(given.get("q4", self.model_config["q4"])),
                "pi0": str(given.get("pi0", self.model_config["pi0"])),
            }
            self._check_preset(preset)
            self.model_config = preset
        if "filters" in given:
            names = list(given["filters"])
            if not names:
                raise ConfigurationError("Invalid filters: must name at least one filter.")
            # a listed filter keeps the strategy the config file gave it
            existing = {f.name: f for f in self.filters}
            self.filters = [existing.get(name) or FilterSpec(name) for name in names]
        if "lambda" in given and "sigma" in given:
            raise ConfigurationError("lambda and sigma overrides are mutually exclusive.")
        if "lambda" in given:
            self._set_strategy(self._parse_lambda(given["lambda"]))
        if "sigma" in given:
            try:
                strategy = KernelStrategy.fixed_sigma(float(given["sigma"]))
            except (TypeError, ValueError) as e:
                raise ConfigurationError(f"Invalid sigma: {given['sigma']!r}.") from e
            self._set_strategy(strategy)

    @staticmethod
    def _parse_lambda(value: Any) -> KernelStrategy:
        if isinstance(value, str) and value.strip().lower() == "adaptive":
            return KernelStrategy.adaptive()
        try:
            return KernelStrategy.constant(float(value))
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigurationError):
                raise
            raise ConfigurationError(
                f"Invalid lambda: {value!r}. Must be a positive number or 'adaptive'."
            ) from e

    def _set_strategy(self, strategy: KernelStrategy) -> None:
        self.filters = [
            f if f.name == "kf" else FilterSpec(f.name, strategy) for f in self.filters
        ]

    @staticmethod
    def _check_protocol(value: Any) -> str:
        if value not in PROTOCOLS:
            raise ConfigurationError(
                f"Invalid protocol: {value!r}. Must be one of {', '.join(PROTOCOLS)}."
            )
        return str(value)

    @staticmethod
    def _check_preset(preset: ModelPreset) -> None:
        if not preset["q4"] > 0:
            raise ConfigurationError(f"Invalid q4: {preset['q4']}. Must be positive.")
        if preset["pi0"] not in PI0_CHOICES:
            raise ConfigurationError(
                f"Invalid pi0: {preset['pi0']}. Must be one of {', '.join(PI0_CHOICES)}."
            )

    # --- DERIVED OBJECTS ---

    @property
    def q4(self) -> float | None:
        """q4 of the satellite preset, or None for other models."""
        if isinstance(self.model_config, dict) and "preset" in self.model_config:
            return float(self.model_config["q4"])
        return None

    @property
    def pi0_label(self) -> str:
        """How Π₀ is chosen: a preset choice, or ``"custom"``."""
        if isinstance(self.model_config, dict) and "preset" in self.model_config:
            return str(self.model_config["pi0"])
        return "custom"

    def constant_lambda(self) -> float:
        """λ of the first filter with a constant-weight strategy (adaptive otherwise)."""
        for f in self.filters:
            if f.name != "kf" and f.strategy.is_constant:
                return f.strategy.constant_lambda()
        return ADAPTIVE_LAMBDA

    def build_model(self) -> LtiModel:
        """Construct the configured model.

        A ``"steady"`` prior is the fixed point of the IMCC Riccati recursion
        for :meth:`constant_lambda`.

        Raises:
            ConfigurationError: If the model entry is invalid.
            SchemaError: If a model file cannot be read.
            ConvergenceError: If the steady-state pre-run does not settle.
        """
        cfg = self.model_config
        if isinstance(cfg, str):
            return load_model(cfg)
        if "preset" in cfg:
            model = satellite_model(float(cfg["q4"]))
            pi0 = cfg["pi0"]
            if pi0 == "zero":
                return replace(model, Pi0=np.zeros_like(SATELLITE_PI0))
            if pi0 == "steady":
                p_ss = steady_state_covariance(model, self.constant_lambda())
                return replace(model, Pi0=p_ss)
            return model
        try:
            return model_from_json(cfg)
        except SchemaError as e:
            raise ConfigurationError(f"Invalid inline model: {e}") from e

    def to_experiment_config(self, model: LtiModel | None = None) -> ExperimentConfig:
        """Bundle the settings for :func:`~ChandraMCC.bench.run_experiment`."""
        return ExperimentConfig(
            model=self.build_model() if model is None else model,
            shot=self.shot,
            N=self.N,
            runs=self.runs,
            base_seed=self.base_seed,
            filters=tuple(self.filters),
            timing_repeats=self.timing_repeats,
            timing_warmup=self.timing_warmup,
            parallel=self.parallel,
            q4=self.q4,
            pi0_label=self.pi0_label,
            protocol=self.protocol,
        )

    # --- SAVING ---

    def to_json(self) -> dict[str, Any]:
        """Encode the current settings in the config-file schema."""
        return {
            "model": self.model_config,
            "shot": self.shot.to_json(),
            "N": self.N,
            "runs": self.runs,
            "base_seed": self.base_seed,
            "seed": self.seed,
            "filters": [f.to_json() for f in self.filters],
            "timing_repeats": self.timing_repeats,
            "timing_warmup": self.timing_warmup,
            "parallel": self.parallel,
            "protocol": self.protocol,
        }

    def save_config(self, path: str | Path) -> None:
        """Write the current settings as JSON.

        Raises:
            SchemaError: If the file cannot be written.
        """
        config_path = Path(path)
        try:
            if config_path.parent and str(config_path.parent) != ".":
                config_path.parent.mkdir(parents=True, exist_ok=True)
            with open(config_path, "w", encoding="utf-8") as f:
                json.dump(self.to_json(), f, indent=2, ensure_ascii=False)
        except OSError as e:
            raise SchemaError(f"Failed to save config to {config_path}: {e}") from e
        self.config_file = str(config_path)

