"""Transfer-learning surrogates of nonlinear seismic time-history response."""

__version__ = "0.1.0"
