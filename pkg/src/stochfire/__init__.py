"""Stochastic cellular-automaton fire ensembles and forecast verification."""
__version__ = "0.1.0"
