"""MPPI blended with a learned Q function through a lambda-weighted estimator."""

__version__ = "0.1.0"
