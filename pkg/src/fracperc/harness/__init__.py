"""Experiment configuration, recipes, records and the command line."""

from .config import RECIPES, ExperimentConfig, load_defaults, validate_config
from .recipes import ConfigError, replay, run_experiment
from .records import COLUMNS, SCHEMA_VERSION, ExperimentRecord

__all__ = [
    "COLUMNS",
    "RECIPES",
    "SCHEMA_VERSION",
    "ConfigError",
    "ExperimentConfig",
    "ExperimentRecord",
    "load_defaults",
    "replay",
    "run_experiment",
    "validate_config",
]
