"""Numerical laboratory for the linearised and nonlinear micropolar fluid system in Fourier variables."""

from .errors import MicropolarError

__version__ = "0.1.0"

__all__ = ["MicropolarError", "__version__"]
