"""Weakly nonlinear coherent backscattering of light by saturable two-level atoms."""

__version__ = "0.1.0"

from .core import Channel, MediumParams, inelastic_spectrum, spectrum_sample  # noqa: E402
from .rt import ConvergenceError, SlabGrid, solve_cross, solve_intensity  # noqa: E402
from .scalar import BistaticBreakdown, assemble, spectral_enhancement  # noqa: E402

__all__ = ["Channel", "MediumParams", "inelastic_spectrum", "spectrum_sample",
           "ConvergenceError", "SlabGrid", "solve_cross", "solve_intensity",
           "BistaticBreakdown", "assemble", "spectral_enhancement", "__version__"]
