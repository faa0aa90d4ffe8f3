"""Discrete-time simulator for SDPC-style vehicular clustering on grid road networks."""

__version__ = "0.1.0"
