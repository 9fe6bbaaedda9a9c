"""Canard cycles of slow-fast systems on the two-torus: a numerical laboratory."""

__version__ = "0.1.0"
