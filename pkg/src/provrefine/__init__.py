"""Probabilistic abstraction refinement over Datalog provenance hypergraphs."""

__version__ = "0.1.0"
