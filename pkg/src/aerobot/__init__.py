"""Guidance and Monte Carlo simulation for buoyancy-controlled planetary balloons."""

__version__ = "0.1.0"
