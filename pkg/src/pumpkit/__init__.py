"""Simulation and calibration toolkit for pumped singlet circuits in optical superlattices."""

__version__ = "0.1.0"
