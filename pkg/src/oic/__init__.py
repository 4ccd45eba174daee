"""Opportunistic intermittent control with formal safety guarantees."""

__version__ = "0.1.0"
