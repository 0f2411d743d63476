"""Command-line harness: configuration, sweeps and cross-checks."""

from .cli import main, run_crosscheck, run_sweep
from .config import ConfigError, SweepConfig, build_config

__all__ = ["main", "run_sweep", "run_crosscheck", "ConfigError", "SweepConfig", "build_config"]
