"""Hourly-billing demand-response game: equilibrium solvers, efficiency analysis, online procedure."""

__version__ = "0.1.0"
