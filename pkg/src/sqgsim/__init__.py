"""Pseudo-spectral simulation and property checks for the stochastic SQG equation."""

__version__ = "0.1.0"
