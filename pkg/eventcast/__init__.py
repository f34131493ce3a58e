"""Hourly emergency-event forecasting with a negative-binomial GAM."""

__version__ = "0.1.0"
