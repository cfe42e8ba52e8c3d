"""Metric-based few-shot learning engine for two-stream video sequences."""

__version__ = "0.1.0"
