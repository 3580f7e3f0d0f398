"""Simulation and certification of non-linear bosonic quantum batteries."""

__version__ = "0.1.0"
