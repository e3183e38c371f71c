"""Keyword detection, spotting and localisation with visually grounded speech models."""

__version__ = "0.1.0"
