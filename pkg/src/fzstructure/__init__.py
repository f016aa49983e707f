"""Finite-scale structure theory for measure-preserving group actions."""

__version__ = "0.1.0"
