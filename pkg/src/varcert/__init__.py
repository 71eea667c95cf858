"""Generalized-derivative toolkit with verifiable stationarity certificates."""

__version__ = "0.1.0"
