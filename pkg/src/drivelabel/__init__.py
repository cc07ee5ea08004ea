"""Drivable-area auto-labeling from trajectory-similarity patch features."""

__version__ = "0.1.0"
