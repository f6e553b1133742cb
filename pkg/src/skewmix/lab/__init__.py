"""Experiment layer: configuration, correlations, reports and the command line."""

from .config import ExperimentConfig
from .correlate import correlation_series, fit_decay_rate
from .report import DecayReport, dichotomy_report

__all__ = ["DecayReport", "ExperimentConfig", "correlation_series", "dichotomy_report", "fit_decay_rate"]
