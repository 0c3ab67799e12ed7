"""Experiment orchestration: config parsing, seeded batches, outputs."""
from __future__ import annotations

from .config import ConfigError, ExperimentMatrix, load_experiment_config, parse_experiment_config
from .runner import RunRecord, episode_seed, run_experiment, splitmix64

__all__ = [
    "ConfigError",
    "ExperimentMatrix",
    "RunRecord",
    "episode_seed",
    "load_experiment_config",
    "parse_experiment_config",
    "run_experiment",
    "splitmix64",
]
