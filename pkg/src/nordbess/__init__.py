"""Revenue forecasting and multi-market bid optimization for battery storage."""

__version__ = "0.1.0"
