"""Constructive layers for phase-field solutions near the Clifford torus."""

__version__ = "0.1.0"
