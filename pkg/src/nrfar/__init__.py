"""Noise-robust acoustic recognition of cattle foraging activities."""

__version__ = "0.1.0"
