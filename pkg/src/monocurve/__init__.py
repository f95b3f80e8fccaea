"""Monotone principal curve estimation via convex duality losses.

Subpackages: convex (scalar convex analysis), nets (scalar networks with
reverse-mode gradients), train (the constrained fitting loop), datagen
(synthetic benchmark families and CSV ingestion), scoring (curve-quality
metrics), cli (command-line surface).
"""

from ._backend import BACKEND as kernel_backend

__all__ = ["kernel_backend"]
__version__ = "0.1.0"
