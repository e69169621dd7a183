"""Deterministic 2D fluence solver based on holographic radiance cascades."""

__version__ = "0.1.0"
