"""Observation impact analysis with self-supervised graph convolutional networks."""

__version__ = "0.1.0"
