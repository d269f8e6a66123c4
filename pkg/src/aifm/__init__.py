"""Acoustic inversion-based flow measurement: particle reconstruction plus 3D optical flow."""

__version__ = "0.1.0"
