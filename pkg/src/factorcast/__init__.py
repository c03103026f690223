"""Systematic-generalization workbench for controlled time-series forecasters."""

__version__ = "0.1.0"
