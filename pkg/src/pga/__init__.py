"""Proximal gradient dataflow analysis over a small register-machine IR."""

__version__ = "0.1.0"
