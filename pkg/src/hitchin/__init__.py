"""Numerical toolkit for positive representations of free groups."""

__version__ = "0.1.0"
