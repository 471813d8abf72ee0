"""Exact simulation and analysis of nearest particle systems on finite intervals."""

__version__ = "0.1.0"
