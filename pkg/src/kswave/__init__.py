"""Spectral stability of chemotactic travelling waves."""

__version__ = "0.1.0"
