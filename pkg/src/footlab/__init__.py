"""Quasi-static stability study of a modular soft robotic foot."""

__version__ = "0.1.0"
