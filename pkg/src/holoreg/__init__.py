"""Simulator of a holographic quantum register stored in spin-wave modes."""

__version__ = "0.1.0"
