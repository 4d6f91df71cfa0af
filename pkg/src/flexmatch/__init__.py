"""Flexibility allocation in sparse random bipartite matching markets."""

__version__ = "0.1.0"
