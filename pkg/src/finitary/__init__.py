"""Finitary codings of stationary renewal processes and finite Markov chains."""

__version__ = "0.1.0"
