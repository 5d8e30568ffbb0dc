"""Polarization weights of the two-photon scattering vertex.

All functions accept polarization vectors as complex arrays whose last axis
has length 3, so that batches of vectors can be evaluated at once. The
bracket ``x . y*`` is written ``dot(x, y)``.
"""
from __future__ import annotations

import numpy as np

from .montecarlo import McEstimate

HELICITY_PLUS = np.array([1.0, 1.0j, 0.0]) / np.sqrt(2.0)


def dot(x, y):
    """Hermitian bracket sum_i x_i conj(y_i) along the last axis."""
    return np.sum(np.asarray(x) * np.conj(y), axis=-1)


def project(eps, direction):
    """Component of ``eps`` transverse to the unit vector ``direction``.

    Parameters
    ----------
    eps : array_like, shape (..., 3)
        Polarization vector(s), possibly complex.
    direction : array_like, shape (..., 3)
        Real unit propagation direction(s).

    Returns
    -------
    ndarray
        ``eps - (eps . dir) dir``; not renormalized.
    """
    eps = np.asarray(eps, dtype=complex)
    d = np.asarray(direction, dtype=float)
    if not np.allclose(np.linalg.norm(d, axis=-1), 1.0):
        raise ValueError("direction must be a unit vector")
    return eps - np.sum(eps * d, axis=-1)[..., None] * d


def pi_ladder(e1, e2, e3):
    """Ladder weight of two photons (e1, e2) scattered into e3, photon 4 traced out."""
    a23, a13 = dot(e2, e3), dot(e1, e3)
    loop = dot(e1, e2) * a23 * dot(e3, e1)
    return 0.25 * (np.abs(a23) ** 2 + np.abs(a13) ** 2 + 2.0 * loop.real)


def pi_crossed(e1, e2, e3t, e3, e2t):
    """Interference weight between a vertex and its reversed counterpart.

    ``e2t`` and ``e3t`` are the polarizations of the reversed photons. Returns
    the complex sum; the crossed intensity uses its real part.
    """
    return 0.25 * (dot(e2, e3) * dot(e2t, e3t)
                   + dot(e2, e3) * dot(e1, e3t) * dot(e2t, e1)
                   + dot(e1, e3) * dot(e2, e3t) * dot(e2t, e1)
                   + dot(e1, e3) * dot(e2, e1) * dot(e2t, e3t))


def pi_prop_ladder(e1, e2, e3):
    """Weight of a probe (e1 -> e3) crossing a pump photon e2 in the ladder."""
    out = 0.5 * dot(e3, e1) * (dot(e1, e2) * dot(e2, e3) + dot(e1, e3) * dot(e2, e2))
    return out.real


def pi_prop_crossed(e1, e2, e3, e2t, e3t):
    """Weight of a probe crossing a pump whose reversed partner is (e2t, e3t)."""
    out = 0.5 * dot(e3, e1) * (dot(e1, e2) * dot(e3t, e2t) + dot(e1, e2t) * dot(e3t, e2))
    return out.real


# --- random polarizations ------------------------------------------------------

def random_polarization(rng: np.random.Generator, size: int, dim: int = 3) -> np.ndarray:
    """Unit vectors uniformly distributed on the complex sphere in C^dim."""
    z = rng.standard_normal((size, dim)) + 1j * rng.standard_normal((size, dim))
    return z / np.linalg.norm(z, axis=-1, keepdims=True)


def random_transverse_pair(rng: np.random.Generator, size: int):
    """Two independent uniform polarizations transverse to a shared random axis."""
    axis = rng.standard_normal((size, 3))
    axis /= np.linalg.norm(axis, axis=-1, keepdims=True)
    # orthonormal basis (u, v) of the plane normal to the axis
    helper = np.where(np.abs(axis[:, :1]) < 0.9, [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
    u = np.cross(axis, helper)
    u /= np.linalg.norm(u, axis=-1, keepdims=True)
    v = np.cross(axis, u)
    c1 = random_polarization(rng, size, 2)
    c3 = random_polarization(rng, size, 2)
    e1 = c1[:, :1] * u + c1[:, 1:] * v
    e3 = c3[:, :1] * u + c3[:, 1:] * v
    return e1, e3


def _estimate(values) -> McEstimate:
    values = np.asarray(values, dtype=float)
    return McEstimate(float(values.mean()), float(values.std(ddof=1) / np.sqrt(len(values))),
                      len(values))


def polarization_averages(n_draws: int = 1_000_000, seed: int = 0) -> dict:
    """Monte-Carlo averages of the four weights for random polarizations.

    The reversed photons carry the conjugate polarizations (helicity-preserving
    channel). For the propagation weights the probe polarizations before and
    after the crossing share their propagation axis.

    Returns
    -------
    dict
        McEstimate for keys ``"ladder"``, ``"crossed"``, ``"prop_ladder"``,
        ``"prop_crossed"``.
    """
    rng = np.random.default_rng(seed)
    e1, e2, e3 = (random_polarization(rng, n_draws) for _ in range(3))
    out = {
        "ladder": _estimate(pi_ladder(e1, e2, e3)),
        "crossed": _estimate(pi_crossed(e1, e2, e3.conj(), e3, e2.conj()).real),
    }
    p1, p3 = random_transverse_pair(rng, n_draws)
    q2 = random_polarization(rng, n_draws)
    out["prop_ladder"] = _estimate(pi_prop_ladder(p1, q2, p3))
    out["prop_crossed"] = _estimate(pi_prop_crossed(p1, q2, p3, q2.conj(), p3.conj()))
    return out
