"""Geometry-aware tooling for Gaussian-splat scenes built from posed video."""

__version__ = "0.1.0"
