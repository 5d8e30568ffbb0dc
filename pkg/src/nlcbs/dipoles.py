"""Coupled saturable point scatterers: a classical check of the diagrammatics.

N isotropic scalar scatterers with a saturable response E / (1 + s|E|^2)
are placed at random in a thin cylinder (lengths in units of 1/k) and
illuminated along +z. The self-consistent local fields solve

    E_i = exp(i k z_i) + i sum_{j != i} exp(i k r_ij) / (k r_ij) * E_j / (1 + s |E_j|^2).

Each scatterer has the unitary-limit cross section 4 pi / k^2, which fixes the
mean free path from the number density. Ensemble averages of the far field
give the disorder-averaged backscattered intensity at exact backscattering
and on a ring outside the coherent backscattering cone.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from . import rt
from .montecarlo import McEstimate

logger = logging.getLogger(__name__)

CROSS_SECTION = 4.0 * math.pi  # in units of 1/k^2
MIN_SEPARATION = 1.0
RADIUS_FACTOR = 5.0
MAX_SCATTERERS = 500
SATURATIONS = (0.0, 0.005, 0.01)


class DipoleConvergenceError(RuntimeError):
    """The damped iteration did not converge; ``history`` holds the residuals."""

    def __init__(self, message, history):
        super().__init__(message)
        self.history = list(history)
        self.residual = self.history[-1] if self.history else math.nan

    def __reduce__(self):
        return type(self), (self.args[0], self.history)


@dataclass(frozen=True)
class ScattererCloud:
    """Scatterer positions (units 1/k) in the cylinder 0 <= z <= thickness, rho <= radius."""

    positions: np.ndarray
    thickness: float
    radius: float

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=float)
        if p.ndim != 2 or p.shape[1] != 3:
            raise ValueError("positions must have shape (N, 3)")
        rho2 = p[:, 0] ** 2 + p[:, 1] ** 2
        if (np.any(p[:, 2] < 0) or np.any(p[:, 2] > self.thickness)
                or np.any(rho2 > self.radius ** 2 * (1 + 1e-12))):
            raise ValueError("all scatterers must lie inside the cylinder")
        object.__setattr__(self, "positions", p)

    @property
    def n(self) -> int:
        return len(self.positions)

    @property
    def volume(self) -> float:
        return math.pi * self.radius ** 2 * self.thickness

    @property
    def density(self) -> float:
        return self.n / self.volume

    @property
    def mean_free_path(self) -> float:
        """k * ell for the cloud density."""
        return 1.0 / (self.density * CROSS_SECTION)

    @property
    def optical_thickness(self) -> float:
        return self.thickness / self.mean_free_path

    def distances(self) -> np.ndarray:
        d = self.positions[:, None, :] - self.positions[None, :, :]
        return np.sqrt(np.sum(d * d, axis=-1))


def cloud_geometry(n: int, b: float, radius_factor: float = RADIUS_FACTOR):
    """(thickness, radius) in units 1/k of a cylinder holding n scatterers at depth b."""
    # b = L / ell with ell = V / (n sigma) and V = pi (f L)^2 L
    thickness = math.sqrt(n * CROSS_SECTION / (math.pi * radius_factor ** 2 * b))
    return thickness, radius_factor * thickness


def random_cloud(rng: np.random.Generator, n: int, b: float,
                 radius_factor: float = RADIUS_FACTOR) -> ScattererCloud:
    """Uniform random cloud, redrawing scatterers closer than 1/k to another one."""
    if not 1 <= n <= MAX_SCATTERERS:
        raise ValueError(f"n must be in [1, {MAX_SCATTERERS}]")
    thickness, radius = cloud_geometry(n, b, radius_factor)

    def draw(m):
        r = radius * np.sqrt(rng.random(m))
        phi = 2.0 * np.pi * rng.random(m)
        return np.column_stack([r * np.cos(phi), r * np.sin(phi), thickness * rng.random(m)])

    pos = draw(n)
    for _ in range(1000):
        d = np.sqrt(np.sum((pos[:, None] - pos[None]) ** 2, axis=-1))
        np.fill_diagonal(d, np.inf)
        close = np.nonzero(np.triu(d < MIN_SEPARATION))
        if not len(close[0]):
            break
        redo = np.unique(close[1])
        pos[redo] = draw(len(redo))
    else:
        raise RuntimeError("could not place scatterers without overlaps")
    return ScattererCloud(pos, thickness, radius)


@dataclass
class FieldState:
    """Local fields E_i and the sup-norm defect of the field equations."""

    fields: np.ndarray
    residual: float
    iterations: int = 0
    history: list = field(default_factory=list)


def coupling_matrix(cloud: ScattererCloud) -> np.ndarray:
    """G_ij = i exp(i r_ij) / r_ij, zero on the diagonal."""
    r = cloud.distances()
    np.fill_diagonal(r, 1.0)
    g = 1j * np.exp(1j * r) / r
    np.fill_diagonal(g, 0.0)
    return g


def incident_field(cloud: ScattererCloud, direction=(0.0, 0.0, 1.0)) -> np.ndarray:
    return np.exp(1j * cloud.positions @ np.asarray(direction, dtype=float))


def _source(e, s):
    return e / (1.0 + s * np.abs(e) ** 2)


def _defect(g, e0, e, s):
    return float(np.max(np.abs(e0 + g @ _source(e, s) - e)))


def _damped_picard(g, e0, e, s, tol, max_iter, alpha, history):
    res = history[-1]
    for _ in range(max_iter):
        if res < tol:
            return e
        e = (1.0 - alpha) * e + alpha * (e0 + g @ _source(e, s))
        new = _defect(g, e0, e, s)
        if new > res:
            if alpha <= 0.25:
                history.append(new)
                return None
            alpha = 0.25
        res = new
        history.append(res)
    return e if res < tol else None


def _preconditioned(g, lu, e0, e, s, tol, max_iter, alpha, history):
    # E = (1 - G)^{-1} [e0 + G (D(E) - 1) E]: only the weak nonlinearity is
    # iterated, with the same damping schedule as the plain iteration
    res = history[-1]
    for _ in range(max_iter):
        if res < tol:
            return e
        step = lu_solve(lu, e0 + g @ (_source(e, s) - e))
        e = (1.0 - alpha) * e + alpha * step
        new = _defect(g, e0, e, s)
        if new > res:
            alpha = 0.25
        res = new
        history.append(res)
    return e if res < tol else None


def solve_fields(cloud: ScattererCloud, s: float, direction=(0.0, 0.0, 1.0), *,
                 tol: float = 1e-10, max_iter: int = 5000, alpha: float = 0.5,
                 method: str = "picard", initial=None, coupling=None, lu=None) -> FieldState:
    """Self-consistent local fields by fixed-point iteration.

    Parameters
    ----------
    cloud : ScattererCloud
    s : float
        Saturation strength, s >= 0.
    direction : array_like
        Unit wave vector of the incident plane wave.
    alpha : float
        Damping of the plain iteration; reduced to 0.25 as soon as the
        defect grows.
    method : {"picard", "preconditioned"}
        ``"picard"`` iterates E <- (1 - alpha) E + alpha * RHS(E) and falls
        back to the preconditioned form if the defect still grows at
        alpha = 0.25 (this happens when the coupling matrix has eigenvalues
        outside the convergence disk). ``"preconditioned"`` applies the same damping to
        E <- (1 - G)^{-1} [e0 + G (E / (1 + s|E|^2) - E)].
    initial : ndarray, optional
        Starting fields; defaults to the solution of the linear problem.
    coupling, lu : optional
        Precomputed coupling matrix and LU factors of (1 - G), reused across s.

    Raises
    ------
    DipoleConvergenceError
        If the defect does not fall below ``tol`` within ``max_iter`` steps.
    """
    if s < 0:
        raise ValueError("s must be non-negative")
    if method not in ("picard", "preconditioned"):
        raise ValueError(f"unknown method {method!r}")
    g = coupling_matrix(cloud) if coupling is None else coupling
    e0 = incident_field(cloud, direction)

    def factor():
        return lu if lu is not None else lu_factor(np.eye(cloud.n) - g)

    if initial is None:
        lu = factor()
        e = lu_solve(lu, e0)
    else:
        e = np.array(initial, dtype=complex)
    history = [_defect(g, e0, e, s)]
    out = None
    if method == "picard":
        out = _damped_picard(g, e0, e, s, tol, max_iter, alpha, history)
        if out is None:
            logger.debug("damped iteration diverging (defect %.3e); preconditioning", history[-1])
    if out is None:
        out = _preconditioned(g, factor(), e0, e, s, tol, max_iter, alpha, history)
    if out is None:
        raise DipoleConvergenceError(
            f"field iteration did not converge (defect {history[-1]:.3e} "
            f"after {len(history) - 1} steps)", history)
    return FieldState(out, history[-1], len(history) - 1, history)


def far_field(state: FieldState, cloud: ScattererCloud, s: float, direction) -> complex:
    """Radiated amplitude sum_j exp(-i dir . r_j) E_j / (1 + s|E_j|^2)."""
    d = np.asarray(direction, dtype=float)
    return complex(np.exp(-1j * cloud.positions @ d) @ _source(state.fields, s))


def reference_angle(kl: float, b: float) -> float:
    """Off-cone reference angle 10 / (k ell b) used for the background."""
    return 10.0 / (kl * b)


def ring_directions(theta: float, n_phi: int = 16) -> np.ndarray:
    """Backward unit vectors at polar angle theta from -z, equally spaced in azimuth."""
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    st = math.sin(theta)
    return np.column_stack([st * np.cos(phi), st * np.sin(phi), -np.full(n_phi, math.cos(theta))])


def realization(seed: int, index: int, n: int, b: float, saturations=SATURATIONS,
                n_phi: int = 16) -> np.ndarray:
    """Far-field amplitudes of one realization.

    Returns
    -------
    ndarray, shape (len(saturations), 1 + n_phi)
        Complex amplitudes at exact backscattering (column 0) and on the
        reference ring, for every saturation, all with the same positions.
    """
    rng = np.random.default_rng([seed, index])
    cloud = random_cloud(rng, n, b)
    theta = reference_angle(cloud.mean_free_path, b)
    dirs = np.vstack([[0.0, 0.0, -1.0], ring_directions(theta, n_phi)])
    phase = np.exp(-1j * cloud.positions @ dirs.T)
    g = coupling_matrix(cloud)
    lu = lu_factor(np.eye(n) - g)
    out = np.empty((len(saturations), len(dirs)), dtype=complex)
    prev = None
    for k, s in enumerate(saturations):
        state = solve_fields(cloud, s, coupling=g, lu=lu, initial=prev, method="preconditioned")
        prev = state.fields
        out[k] = _source(state.fields, s) @ phase
    return out


def _batch(args):
    seed, start, stop, n, b, saturations, n_phi = args
    return np.stack([realization(seed, i, n, b, saturations, n_phi) for i in range(start, stop)])


def ensemble_amplitudes(n: int, b: float, n_realizations: int, seed: int = 0, *,
                        saturations=SATURATIONS, n_phi: int = 16, workers: int = 1) -> np.ndarray:
    """Stack of per-realization amplitudes, shape (R, len(saturations), 1 + n_phi)."""
    chunk = 64
    jobs = [(seed, i, min(i + chunk, n_realizations), n, b, tuple(saturations), n_phi)
            for i in range(0, n_realizations, chunk)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            parts = list(ex.map(_batch, jobs))
    else:
        parts = [_batch(j) for j in jobs]
    return np.concatenate(parts)


@dataclass
class DipoleEnsemble:
    """Disorder-averaged backscattering from coupled-dipole realizations.

    Intensities are diffuse, i.e. with the mean-field (specular) part
    removed, and normalized per scatterer.
    """

    saturations: np.ndarray
    background: np.ndarray     # per realization and saturation, ring average
    peak: np.ndarray           # per realization and saturation, exact backscattering
    n_scatterers: int

    @classmethod
    def from_amplitudes(cls, amps: np.ndarray, saturations, n: int) -> "DipoleEnsemble":
        mean = amps.mean(axis=0, keepdims=True)
        inten = np.abs(amps - mean) ** 2 / n
        # unbiased variance estimate of the fluctuating part
        r = len(amps)
        inten *= r / (r - 1)
        return cls(np.asarray(saturations, float), inten[:, :, 1:].mean(axis=-1),
                   inten[:, :, 0], n)

    @property
    def crossed(self) -> np.ndarray:
        return self.peak - self.background

    def _est(self, x) -> McEstimate:
        return McEstimate(float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x))), len(x))

    def enhancement(self, k: int = 0) -> McEstimate:
        """Peak over background at saturation index k (delta method)."""
        p, q = self.peak[:, k], self.background[:, k]
        ratio = p.mean() / q.mean()
        resid = (p - ratio * q) / q.mean()
        return McEstimate(float(ratio), float(resid.std(ddof=1) / math.sqrt(len(p))), len(p))

    def crossed_slope(self) -> McEstimate:
        """Least-squares d(crossed)/ds at s = 0, normalized by crossed(s=0).

        The slope is fitted per realization, so realization-to-realization
        fluctuations common to all saturations cancel.
        """
        s = self.saturations
        c = self.crossed
        a = np.vstack([np.ones_like(s), s, s * s]).T if len(s) > 2 else np.vstack(
            [np.ones_like(s), s]).T
        coef = np.linalg.lstsq(a, c.T, rcond=None)[0]
        slope, c0 = coef[1], c[:, 0]
        gamma = slope.mean() / c0.mean()
        resid = (slope - gamma * c0) / c0.mean()
        return McEstimate(float(gamma), float(resid.std(ddof=1) / math.sqrt(len(c0))), len(c0))


def ensemble_backscatter(n: int, b: float, n_realizations: int, seed: int = 0, *,
                         saturations=SATURATIONS, n_phi: int = 16, workers: int = 1):
    """(background, enhanced) McEstimates at s = 0 plus the full ensemble."""
    amps = ensemble_amplitudes(n, b, n_realizations, seed, saturations=saturations,
                               n_phi=n_phi, workers=workers)
    ens = DipoleEnsemble.from_amplitudes(amps, saturations, n)
    return ens._est(ens.background[:, 0]), ens._est(ens.peak[:, 0]), ens


def predicted_crossed_slope(b: float, kl: float, *, reversed_propagation: bool = True) -> float:
    """Diagrammatic prediction of :meth:`DipoleEnsemble.crossed_slope`.

    The measured crossed signal is the exact-backscattering intensity minus
    the ring at the reference angle, i.e. L(1) + C(1) - L(mu_ref), so the
    ladder at the reference exit cosine enters as well.

    Parameters
    ----------
    b : float
        Optical thickness.
    kl : float
        k times the mean free path, which sets the reference angle.
    reversed_propagation : bool
        If False, drop the crossed propagation diagrams obtained by reversing
        the pump photon; each of them equals its ladder counterpart, so the
        crossed propagation term loses one ladder propagation term.
    """
    from . import scalar

    grid = rt.SlabGrid(b)
    intensity = rt.solve_intensity(grid)
    l1, c1, _ = scalar.linear_components(grid, intensity)
    ls, cs = scalar.elastic_scattering_components(grid, intensity)
    lp, cp = scalar.propagation_components(grid, intensity)
    if not reversed_propagation:
        cp = cp - lp
    mu = math.cos(reference_angle(kl, b))
    l1_ref, ls_ref, lp_ref = scalar.oblique_ladder_components(b, mu)
    return (ls + lp + cs + cp - ls_ref - lp_ref) / (l1 + c1 - l1_ref)
