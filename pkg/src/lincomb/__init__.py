"""Optimal linear combinations of binary classifiers."""

__version__ = "0.1.0"
