"""Numerical laboratory for maximum-principle gradient bounds and Landis-type
unique continuation on strictly convex domains."""

__version__ = "0.1.0"
