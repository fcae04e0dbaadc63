"""Probabilistic day-ahead electricity price forecasting with LSTMs and a
superstatistical check of the forecast volatility."""

__version__ = "0.1.0"
