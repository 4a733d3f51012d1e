"""Bipartite process matrices: validity, causal separability, causal inequalities and sampling."""

__version__ = "1.0.0"
