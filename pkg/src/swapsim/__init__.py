"""Simulation and analysis of entanglement swapping between OAM photon pairs."""

__version__ = "0.1.0"
