"""Counting-factor dual bounds and reconstructions for non-binary discrete tomography."""

__version__ = "0.1.0"
