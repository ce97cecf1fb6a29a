"""Numerical machinery for bubble concentration along closed geodesics."""

__version__ = "0.1.0"
