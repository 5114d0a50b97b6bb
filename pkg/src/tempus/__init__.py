"""Covariant time-of-arrival and clock-time distributions on momentum grids."""

__version__ = "0.1.0"
