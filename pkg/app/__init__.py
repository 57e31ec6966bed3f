"""Dual ensemble Kalman filter for stochastic and risk-sensitive optimal control"""

__version__ = "0.1.0"
