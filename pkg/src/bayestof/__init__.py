"""Probabilistic depth inference for pulsed time-of-flight cameras."""

__version__ = "0.1.0"
