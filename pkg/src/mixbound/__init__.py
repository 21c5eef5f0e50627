"""Stability bounds for stationary phi-mixing and beta-mixing processes."""
from mixbound._backend import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
