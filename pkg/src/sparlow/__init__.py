"""Joint learning of a sparsifying dictionary and a low-dimensional orthogonal projection."""

from ._backend import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
