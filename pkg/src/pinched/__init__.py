"""Numerical lab for pinched skew products and their upper bounding graphs."""

__version__ = "0.1.0"
