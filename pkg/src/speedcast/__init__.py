"""Multistep road-link speed forecasting on directed road networks."""

__version__ = "0.1.0"
