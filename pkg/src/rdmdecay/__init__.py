"""Spectral decay of one-particle density matrices for cusped model wavefunctions."""
__version__ = "0.1.0"
