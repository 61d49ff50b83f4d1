"""Exact and asymptotic analysis of a binomial splitting process."""

__version__ = "0.1.0"
