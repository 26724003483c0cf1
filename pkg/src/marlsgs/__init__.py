"""Learned eddy-viscosity closures for forced 2D beta-plane turbulence."""

__version__ = "0.1.0"
