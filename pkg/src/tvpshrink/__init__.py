"""Bayesian dynamic regression with heavy tails, stochastic volatility and Dirichlet-Laplace shrinkage."""

__version__ = "0.1.0"
