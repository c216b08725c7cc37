"""Recover polynomial Lagrangians from sampled optimal trajectories."""

__version__ = "0.1.0"
