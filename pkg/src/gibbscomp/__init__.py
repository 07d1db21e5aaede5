"""Dobrushin-type comparison bounds for finite Gibbs measures and block particle filters."""

__version__ = "0.1.0"
