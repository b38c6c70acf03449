"""Simulation and verification toolkit for the 1D cubic Klein-Gordon equation."""

__version__ = "0.1.0"
