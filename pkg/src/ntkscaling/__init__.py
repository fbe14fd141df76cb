"""Spectra, power-law asymptotics and training dynamics of neural tangent kernels."""

from . import distributions, kernels, spectral, targets, theory, trainer

__version__ = "0.1.0"

__all__ = ["distributions", "kernels", "spectral", "targets", "theory", "trainer", "__version__"]
