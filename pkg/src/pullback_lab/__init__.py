"""Numerical laboratory for pullback attractors of perturbed nonlocal reaction-diffusion equations."""

__version__ = "0.1.0"
