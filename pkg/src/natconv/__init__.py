"""Finite elements for Boussinesq natural convection with a discrete Hopf extension."""

__version__ = "0.1.0"
