"""Velocity-bias estimation from brightness and depth fields on the sphere."""

__version__ = "0.1.0"
