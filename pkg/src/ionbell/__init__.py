"""Simulation and analysis of a mixed-species two-ion geometric phase gate."""
from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
