"""Numerical suite for small-amplitude fully localised gravity-capillary solitary waves on deep water."""

__version__ = "0.1.0"
