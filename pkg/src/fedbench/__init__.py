"""Federated-learning benchmark toolkit with a built-in reference engine."""

__version__ = "0.1.0"
