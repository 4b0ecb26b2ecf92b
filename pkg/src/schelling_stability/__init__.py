"""Schelling segregation on the torus with log-linear response and Markovian pair scheduling."""

__version__ = "0.1.0"
