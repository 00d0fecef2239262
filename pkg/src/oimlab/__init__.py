"""Prototype-normalized, localization-aware OIM metric learning at desk scale."""
from .kernels import BACKEND

__version__ = "0.1.0"
