"""Numerical toolkit for n-level singular-limit scattering matrices."""

__version__ = "0.3.0"
