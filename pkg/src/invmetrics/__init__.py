"""Numerical invariant metrics on model domains: Bergman, Kobayashi-Royden and Kahler-Einstein."""

__version__ = "0.1.0"
