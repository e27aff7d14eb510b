"""Resonant-state expansion of tunneling decay in one-dimensional traps."""

__version__ = "0.1.0"
