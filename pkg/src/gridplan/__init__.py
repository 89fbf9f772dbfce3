"""Cooperative renewable investment planning for interconnected microgrids."""

__version__ = "0.1.0"
