"""Kinetically constrained exclusion on the torus and its porous-medium
hydrodynamic limit: simulation, PDE solver and relative-entropy diagnostics."""

from ._backend import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
