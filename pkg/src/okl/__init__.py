"""Numerical laboratory for the open KPZ equation on a finite interval."""

__version__ = "0.1.0"
