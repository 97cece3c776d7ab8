"""Copula ABC with distributional random forests, for iid and network models."""

__version__ = "0.1.0"
