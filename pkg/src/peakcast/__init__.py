"""peakcast: peak-demand forecasting with context-aligned attention."""

__version__ = "0.1.0"
