"""Rendering for benchmark output: C2ST-vs-budget curves and corner plots."""

__version__ = "0.1.0"
