"""Robust local algorithms and their sample-based simulation."""

__version__ = "0.1.0"
