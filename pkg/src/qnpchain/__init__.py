"""Simulation and discrimination metrics for Kerr-processor measurement chains."""

__version__ = "0.1.0"
