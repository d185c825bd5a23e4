"""Dimension recommendation for monitors over a heterogeneous monitor entity graph."""

__version__ = "1.0.0"
