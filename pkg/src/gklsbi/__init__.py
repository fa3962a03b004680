"""Posterior surrogate training with a generalized KL objective, plus the
benchmark harness that scores surrogates with a classifier two-sample test."""

__version__ = "0.1.0"
