"""Numerical toolkit for quantum parameter estimation."""

__version__ = "0.1.0"
