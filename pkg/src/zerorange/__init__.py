"""Boundary-driven zero-range process with slow reservoirs."""

__version__ = "0.1.0"
