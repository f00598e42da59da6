"""Hoeffding bounds for Wasserstein-ergodic Markov models, with Monte Carlo certification."""

__version__ = "0.1.0"
