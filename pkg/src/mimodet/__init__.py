"""Massive MIMO detection algorithms with exact operation accounting."""

__version__ = "0.1.0"
