"""Unextendible entanglement of quantum channels via geometric Renyi divergences."""

__version__ = "0.1.0"
