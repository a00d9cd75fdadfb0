"""Benchmark harness: configs, experiment runs, rate fits and the CLI."""

from .config import SCHEMA, dump_config, load_config, parse_config
from .rates import RateFit, fit_rate, fit_series, mean_trace, rate_report, running_mean, running_min
from .runner import ExperimentResult, run_experiment

__all__ = [
    "SCHEMA",
    "ExperimentResult",
    "RateFit",
    "dump_config",
    "fit_rate",
    "fit_series",
    "load_config",
    "mean_trace",
    "parse_config",
    "rate_report",
    "run_experiment",
    "running_mean",
    "running_min",
]
