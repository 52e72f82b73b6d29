"""Switching isotropic/directional parameter-space noise for exploration."""

__version__ = "0.1.0"
