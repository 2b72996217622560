"""Numerical laboratory for the general XY model on the circle."""

__version__ = "1.0.0"
