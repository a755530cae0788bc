"""Product-formula simulation of time-dependent k-local Liouvillians,
including maps that are not completely positive."""

__version__ = "0.1.0"
