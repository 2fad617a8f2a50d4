"""Finite-dose transdermal diffusion through layered skin."""
__version__ = "0.1.0"
