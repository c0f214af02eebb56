"""Hierarchical multi-task session recommender with a from-scratch autodiff core."""

__version__ = "0.1.0"
