"""
relmon settings
Handles numeric tolerances, search bounds and runtime preferences.
"""

import json
import os
from pathlib import Path
from typing import Any, Callable, Dict, List
from dataclasses import dataclass, asdict, field
import logging

from .core.errors import ConfigInvalid

logger = logging.getLogger(__name__)

PRECISIONS = ("double", "extended")


@dataclass
class AppSettings:
    """Logging and worker threads."""
    log_level: str = "INFO"
    log_to_file: bool = False
    max_threads: int = 4
    parallel_processing: bool = True


@dataclass
class NumericsSettings:
    """Tolerances and precision for the numerical layer."""
    precision: str = "double"  # double, extended
    extended_dps: int = 30
    ode_tol: float = 1e-12
    round_tol: float = 1e-4
    rel_tol: float = 1e-8
    series_radius: float = 0.5
    max_ode_steps: int = 200000
    min_step: float = 1e-12
    rounding_refinements: int = 1  # retries with ode_tol / 10 after a RoundingFailure


@dataclass
class TopologySettings:
    """Keyhole geometry and path sampling."""
    clearance: float = 0.25
    detour_factor: float = 2.0
    log_samples_per_segment: int = 48
    min_sample_step: float = 1e-7


@dataclass
class MonodromySettings:
    """Bounds for kernel-word search and lattice saturation."""
    max_word_len: int = 8
    max_bfs_nodes: int = 20000
    conjugator_len: int = 2
    max_kernel_words: int = 2000
    orbit_max_rounds: int = 12


@dataclass
class BettiSettings:
    """Grid sampling and torsion detection."""
    grid_resolution: List[int] = field(default_factory=lambda: [5, 5])
    max_torsion_order: int = 12
    constancy_factor: float = 10.0


# Environment overrides: variable -> (section, field, parser)
_ENV_OVERRIDES: Dict[str, tuple] = {
    "RELMON_ODE_TOL": ("numerics", "ode_tol", float),
    "RELMON_ROUND_TOL": ("numerics", "round_tol", float),
    "RELMON_REL_TOL": ("numerics", "rel_tol", float),
    "RELMON_PRECISION": ("numerics", "precision", str),
    "RELMON_MAX_THREADS": ("app", "max_threads", int),
    "RELMON_LOG_LEVEL": ("app", "log_level", str),
}

_SECTIONS: Dict[str, Callable[..., Any]] = {
    "app": AppSettings,
    "numerics": NumericsSettings,
    "topology": TopologySettings,
    "monodromy": MonodromySettings,
    "betti": BettiSettings,
}


class ConfigurationManager:
    """
    Process-wide relmon settings.
    One dataclass section per layer, persisted to settings.json under RELMON_HOME.
    """

    _instance = None

    def __new__(cls):
        """One manager per process."""
        if cls._instance is None:
            cls._instance = super().__new__(cls)
            cls._instance._initialized = False
        return cls._instance

    def __init__(self):
        """Read settings.json, then apply RELMON_* overrides."""
        if self._initialized:
            return

        self._initialized = True
        self._config_dir = self._get_config_directory()
        self._config_file = self._config_dir / "settings.json"

        self.app = AppSettings()
        self.numerics = NumericsSettings()
        self.topology = TopologySettings()
        self.monodromy = MonodromySettings()
        self.betti = BettiSettings()

        self.load()
        self.apply_environment()

        logger.debug(f"Configuration manager initialized. Config dir: {self._config_dir}")

    def _get_config_directory(self) -> Path:
        """Get the settings directory."""
        override = os.environ.get("RELMON_HOME")
        if override:
            return Path(override)
        return Path.home() / ".config" / "relmon"

    def load(self) -> bool:
        """
        Read settings.json into the sections.

        Returns:
            bool: True if loaded successfully (or no file exists), False otherwise.
        """
        try:
            if not self._config_file.exists():
                logger.debug("No settings file found. Using defaults.")
                return True

            with open(self._config_file, 'r', encoding='utf-8') as f:
                data = json.load(f)

            for name, factory in _SECTIONS.items():
                if name in data:
                    setattr(self, name, factory(**data[name]))

            logger.info(f"Settings loaded from {self._config_file}")
            return True

        except Exception as e:
            logger.error(f"Could not read settings from {self._config_file}: {e}")
            return False

    def save(self) -> bool:
        """
        Write every section to settings.json.

        Returns:
            bool: True if saved successfully, False otherwise.
        """
        try:
            self._config_dir.mkdir(parents=True, exist_ok=True)
            data = {name: asdict(getattr(self, name)) for name in _SECTIONS}

            with open(self._config_file, 'w', encoding='utf-8') as f:
                json.dump(data, f, indent=2, ensure_ascii=False)

            logger.info(f"Settings written to {self._config_file}")
            return True

        except Exception as e:
            logger.error(f"Could not write settings to {self._config_file}: {e}")
            return False

    def apply_environment(self, environ: Dict[str, str] = None):
        """
        Apply RELMON_* environment overrides on top of the loaded settings.

        Raises:
            ConfigInvalid: if a variable cannot be parsed.
        """
        environ = os.environ if environ is None else environ
        for variable, (section, name, parser) in _ENV_OVERRIDES.items():
            raw = environ.get(variable)
            if raw is None or raw == "":
                continue
            try:
                value = parser(raw)
            except ValueError as e:
                raise ConfigInvalid(f"{variable}={raw!r} is not a valid {parser.__name__}") from e
            setattr(getattr(self, section), name, value)
            logger.info(f"Environment override {variable}={value}")

        if self.numerics.precision not in PRECISIONS:
            raise ConfigInvalid(
                f"precision must be one of {PRECISIONS}, got {self.numerics.precision!r}"
            )

    def reset_to_defaults(self):
        """Fresh default sections (the settings file is left alone)."""
        for name, factory in _SECTIONS.items():
            setattr(self, name, factory())
        logger.debug("Settings reset to defaults")

    def snapshot(self) -> Dict[str, Any]:
        """Plain-dict copy of every section (embedded in run reports)."""
        return {name: asdict(getattr(self, name)) for name in _SECTIONS}

    @property
    def config_directory(self) -> Path:
        """Get the settings directory path."""
        return self._config_dir

    @property
    def logs_directory(self) -> Path:
        """Where file logs and runs.log go."""
        return self._config_dir / 'logs'

    @property
    def experiments_directory(self) -> Path:
        """Get the bundled experiments directory path."""
        return Path(__file__).parent / 'resources' / 'experiments'

    @property
    def user_experiments_directory(self) -> Path:
        """Get the directory for user-saved experiments."""
        return self._config_dir / 'experiments'


# Shared settings
config = ConfigurationManager()
