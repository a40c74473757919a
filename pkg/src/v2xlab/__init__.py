"""Discrete-time traffic and V2X warning-message co-simulation."""

__version__ = "0.1.0"
