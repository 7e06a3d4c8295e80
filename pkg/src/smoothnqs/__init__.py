"""Smooth neural quantum states for quench dynamics of the tilted Ising chain."""

__version__ = "0.1.0"
