"""Experiment configuration, seeded sweeps and the command line."""

from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .pipeline import Experiment
from .sweeps import ResultRow, SweepResult, run_mse_sweep, run_sum_rate_sweep
