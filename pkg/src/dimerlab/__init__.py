"""Dimer covers of planar bipartite graphs: exact counts, surface tension and limit shapes."""

__version__ = "0.1.0"
