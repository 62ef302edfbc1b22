"""Learned greedy-construction heuristics for graph optimization, with
classical baselines, exact small-instance solvers, and an evaluation harness."""

__version__ = "0.1.0"
