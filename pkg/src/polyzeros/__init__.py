"""Zeros of random polynomials: sampling, root finding, Gaussian oracles and Monte Carlo statistics."""

__version__ = "0.1.0"
