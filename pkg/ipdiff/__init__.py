"""Simulation and Monte Carlo verification lab for interval-partition diffusions."""

__version__ = "0.1.0"
