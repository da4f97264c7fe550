"""Experiment driver: configuration, sweeps, rate fits and the command line."""
from .config import ConfigError, ExperimentConfig
from .experiment import RateReport, run_experiment
from .rates import fit_rate

__all__ = ["ConfigError", "ExperimentConfig", "RateReport", "fit_rate", "run_experiment"]
