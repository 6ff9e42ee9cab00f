"""Piecewise-linear Bayesian capacity forecasting with correlation-gated feature selection."""
__version__ = "0.1.0"
