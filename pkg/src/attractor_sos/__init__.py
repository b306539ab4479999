"""Outer approximations of global attractors via sum-of-squares tightenings."""

__version__ = "0.1.0"
