"""Numerical toolkit for Bonnet pairs of surfaces in Euclidean 3-space."""

__version__ = "0.1.0"
