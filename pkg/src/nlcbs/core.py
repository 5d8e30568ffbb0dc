"""Dimensionless atomic-optics primitives for a two-level atom.

All frequencies are detunings in units of the natural linewidth (Gamma = 1),
all lengths are in units of the linear mean free path at the laser frequency.
Complex amplitudes are plain Python/numpy complex numbers.
"""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import PchipInterpolator


class Channel(str, enum.Enum):
    """Polarization channel of the detection."""

    SCALAR = "scalar"
    HH = "hh"  # helicity preserving, detector polarization = conj(laser polarization)

    @classmethod
    def parse(cls, value: "str | Channel") -> "Channel":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("∥", "").replace("||", "").replace("_", "")
        aliases = {"scalar": cls.SCALAR, "hh": cls.HH, "hparallelh": cls.HH, "hparh": cls.HH}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown channel {value!r}; allowed: scalar, hh") from None


@dataclass(frozen=True)
class MediumParams:
    """Physical configuration of the slab.

    Attributes
    ----------
    detuning : float
        Laser detuning delta/Gamma.
    b : float
        Optical thickness L/ell at the laser frequency.
    s0 : float
        On-resonance saturation parameter I0/Is.
    channel : Channel
        Scalar photons or the h||h polarization channel.
    klf : float
        k*ell, only used to warn when the dilute-medium assumption fails.
    """

    detuning: float = 0.0
    b: float = 0.5
    s0: float = 0.0
    channel: Channel = Channel.SCALAR
    klf: float = 100.0

    def __post_init__(self):
        object.__setattr__(self, "channel", Channel.parse(self.channel))
        if not np.isfinite(self.detuning):
            raise ValueError("detuning must be finite")
        if not self.b > 0:
            raise ValueError(f"optical thickness must be > 0, got {self.b}")
        if not self.s0 >= 0:
            raise ValueError(f"saturation s0 must be >= 0, got {self.s0}")
        if not self.klf > 1:
            raise ValueError(f"k*ell must be > 1, got {self.klf}")
        if self.klf < 10:
            warnings.warn(f"k*ell = {self.klf} is not >> 1; dilute-medium results are unreliable",
                          stacklevel=2)

    @property
    def s(self) -> float:
        return saturation(self.detuning, self.s0)


def scattering_amplitude(delta):
    """Scattering amplitude in units of -4*pi*i/k, i.e. 1/(1 - 2i*delta)."""
    return 1.0 / (1.0 - 2j * np.asarray(delta, dtype=float)) if np.ndim(delta) \
        else 1.0 / (1.0 - 2j * float(delta))


def cross_section(delta):
    """Scattering cross section relative to its on-resonance value."""
    delta = np.asarray(delta, dtype=float) if np.ndim(delta) else float(delta)
    return 1.0 / (1.0 + 4.0 * delta * delta)


def mean_free_path_ratio(delta_from, delta_to):
    """ell(delta_to) / ell(delta_from) at fixed atomic density."""
    return (1.0 + 4.0 * np.square(delta_to)) / (1.0 + 4.0 * np.square(delta_from))


def complex_attenuation(delta, delta_p):
    """Complex rate a = -ik(n_w - conj(n_w')) in units of 1/ell(delta).

    Governs e^{-a z} for the product of an amplitude at ``delta`` and a
    conjugate amplitude at ``delta_p``; equals 1 when the frequencies coincide.
    """
    ratio = 1.0 / mean_free_path_ratio(delta, delta_p)  # ell / ell'
    return 0.5 * (1.0 + ratio) + 1j * (delta - delta_p * ratio)


def saturation(delta, s0):
    """Detuning-reduced saturation parameter s = s0 / (1 + 4 delta^2)."""
    if np.any(np.asarray(s0) < 0):
        raise ValueError("s0 must be >= 0")
    return s0 * cross_section(delta)


def inelastic_spectrum(delta, delta_p):
    """Normalized two-photon inelastic spectrum P(delta') in units of 1/Gamma.

    Two peaks of unit width at delta' = 0 and delta' = 2*delta, symmetric
    about delta' = delta; the tails fall off as delta'^-4.
    """
    dp = np.asarray(delta_p, dtype=float)
    den = (dp * dp + 0.25) * ((2.0 * delta - dp) ** 2 + 0.25)
    out = (1.0 + 4.0 * delta * delta) / (4.0 * np.pi * den)
    return out if out.ndim else float(out)


class SpectrumSampler:
    """Inverse-CDF sampler for the inelastic spectrum at a fixed laser detuning.

    The CDF is tabulated on ``n_nodes`` points ``delta + tan(theta)`` with
    ``theta`` uniform, so the table reaches |delta' - delta| ~ 1e4 and the
    neglected tail mass is below 1e-12. The inverse is a monotone cubic
    (PCHIP) interpolant of delta'(u), whose derivative gives the exact density
    of the generated samples for importance weighting.
    """

    def __init__(self, delta: float, n_nodes: int = 4096, gl_order: int = 8):
        self.delta = float(delta)
        tmax = 0.5 * np.pi - 1e-4
        theta = np.linspace(-tmax, tmax, n_nodes)
        x, w = np.polynomial.legendre.leggauss(gl_order)
        lo, hi = theta[:-1, None], theta[1:, None]
        th = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
        integrand = inelastic_spectrum(self.delta, self.delta + np.tan(th)) / np.cos(th) ** 2
        pieces = 0.5 * (hi[:, 0] - lo[:, 0]) * (integrand @ w)
        cdf = np.concatenate([[0.0], np.cumsum(pieces)])
        self.mass = float(cdf[-1])
        self.nodes = self.delta + np.tan(theta)
        self.cdf = cdf / cdf[-1]
        self._inverse = PchipInterpolator(self.cdf, self.nodes)
        self._dinverse = self._inverse.derivative()

    def sample(self, u):
        """Map uniform variates u in [0, 1) to detunings."""
        return self._inverse(u)

    def jacobian(self, u):
        """d delta' / du; P(delta') * jacobian(u) is the importance weight."""
        return self._dinverse(u)

    @property
    def breakpoints(self) -> np.ndarray:
        return self._inverse.x

    @property
    def coefficients(self) -> np.ndarray:
        """Piecewise-cubic coefficients, shape (4, n_intervals), highest power first."""
        return self._inverse.c


@lru_cache(maxsize=64)
def spectrum_sampler(delta: float) -> SpectrumSampler:
    return SpectrumSampler(delta)


def spectrum_sample(delta: float, u):
    """Draw a final detuning from P(delta') given uniform variate(s) u in [0, 1)."""
    u_arr = np.asarray(u, dtype=float)
    if np.any((u_arr < 0) | (u_arr >= 1)):
        raise ValueError("u must lie in [0, 1)")
    out = spectrum_sampler(float(delta)).sample(u_arr)
    return out if np.ndim(out) else float(out)
