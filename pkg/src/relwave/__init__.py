"""Relativistic wave packets, boosts and measurement reduction."""

__version__ = "0.1.0"
