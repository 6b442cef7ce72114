"""Robustness benchmarking for continuous-control RL under injected disturbances."""

__version__ = "0.1.0"
