"""Exterior scalar wave solver for the unit sphere."""

__version__ = "0.1.0"
