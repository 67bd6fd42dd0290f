"""Tail asymptotics of dependent heavy-tailed sums."""

__version__ = "0.1.0"
