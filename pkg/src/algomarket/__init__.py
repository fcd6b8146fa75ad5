"""Tuple-frequency comparison of market price directions with algorithmic sources."""

__version__ = "0.1.0"
