"""Entanglement-renormalization networks and holographic-geometry
calculators for two-point correlator flows and entanglement scaling."""

__version__ = "0.1.0"
