"""Data-driven center manifolds via constrained kernel regression."""
from .kernels import KernelSpec

__all__ = ["KernelSpec"]
