"""Self-steering target speaker extraction with a particle-filter tracker."""

from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND"]
