"""Gradient reweighting for class-incremental learning on long-tailed data."""

__version__ = "0.1.0"
