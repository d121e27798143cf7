"""Magnetic geodesics on a hyperbolic genus-two surface."""

__version__ = "0.1.0"
