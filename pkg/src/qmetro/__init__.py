"""Noise-resilient quantum metrology with variational principal-component purification."""

__version__ = "0.1.0"
