"""Lifted dynamic programming and IQ-learning for mean-field control."""

__version__ = "0.1.0"
