"""Bayesian variable selection with a closed-form generalized g-prior Bayes factor."""

__version__ = "0.1.0"
