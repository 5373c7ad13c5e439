"""Simulation, fitting and goodness-of-fit diagnostics for point processes on networks."""

__version__ = "0.1.0"
