"""Weak-nonlinearity backscattering components for scalar photons.

Every nonlinear component is returned per unit saturation parameter s, i.e.
as the coefficient of the term linear in s. Linear components are the
s -> 0 limits. All integrals run over the depth of the slab, lengths being
measured in laser mean free paths.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rt
from .core import (Channel, MediumParams, complex_attenuation, inelastic_spectrum,
                   mean_free_path_ratio)

SPECTRAL_CUTOFF = 8.0
SPECTRAL_GL_ORDER = 129
SPECTRAL_TAIL_ORDER = 16


@dataclass
class BistaticBreakdown:
    """Linear and first-order nonlinear components of the backscattered light.

    Nonlinear fields are per unit s. ``mc_errors`` maps field names to one
    standard error when the values come from a Monte-Carlo estimate.
    """

    L_el_1: float
    C_el_1: float
    S_el_1: float
    L_el_2_scatt: float
    C_el_2_scatt: float
    L_in_2: float
    C_in_2: float
    L_el_2_prop: float
    C_el_2_prop: float
    mc_errors: dict = field(default_factory=dict)

    @property
    def L_2(self) -> float:
        return self.L_el_2_scatt + self.L_in_2 + self.L_el_2_prop

    @property
    def C_2(self) -> float:
        return self.C_el_2_scatt + self.C_in_2 + self.C_el_2_prop

    @property
    def gamma_L(self) -> float:
        return self.L_2 / self.L_el_1

    @property
    def gamma_C(self) -> float:
        return self.C_2 / self.C_el_1

    @property
    def eta_linear(self) -> float:
        return 1.0 + self.C_el_1 / self.L_el_1

    @property
    def eta_slope(self) -> float:
        """d eta / d s at s = 0."""
        return (self.eta_linear - 1.0) * (self.gamma_C - self.gamma_L)

    def eta(self, s: float) -> float:
        """Enhancement factor to first order in s."""
        return self.eta_linear + self.eta_slope * s

    def gammas(self) -> dict:
        """Normalized slopes of the individual mechanisms."""
        return {
            "L_el_scatt": self.L_el_2_scatt / self.L_el_1,
            "L_in": self.L_in_2 / self.L_el_1,
            "L_el_prop": self.L_el_2_prop / self.L_el_1,
            "C_el_scatt": self.C_el_2_scatt / self.C_el_1,
            "C_in": self.C_in_2 / self.C_el_1,
            "C_el_prop": self.C_el_2_prop / self.C_el_1,
            "L": self.gamma_L,
            "C": self.gamma_C,
        }

    def as_dict(self) -> dict:
        keys = ["L_el_1", "C_el_1", "S_el_1", "L_el_2_scatt", "C_el_2_scatt", "L_in_2",
                "C_in_2", "L_el_2_prop", "C_el_2_prop"]
        out = {k: getattr(self, k) for k in keys}
        out.update(gamma_L=self.gamma_L, gamma_C=self.gamma_C, eta_linear=self.eta_linear,
                   eta_slope=self.eta_slope)
        return out


# --- linear components -------------------------------------------------------

def linear_ladder(grid: rt.SlabGrid, intensity: np.ndarray) -> float:
    """Linear ladder, the depth integral of I(z) e^{-z}."""
    return float(grid.integrate(intensity * np.exp(-grid.z)))


def linear_crossed(grid: rt.SlabGrid, intensity: np.ndarray):
    """(C, S): linear crossed term and the single scattering it excludes."""
    single = 0.5 * (1.0 - np.exp(-2.0 * grid.b))
    return linear_ladder(grid, intensity) - single, single


def linear_components(grid: rt.SlabGrid, intensity: np.ndarray):
    """(L, C, S) of linear backscattering.

    C excludes single scattering, which has no reversed partner.
    """
    crossed, single = linear_crossed(grid, intensity)
    return crossed + single, crossed, single


# --- nonlinear scattering vertex ---------------------------------------------

def _vertex_weight(grid, intensity):
    return 2.0 * intensity ** 2 - np.exp(-2.0 * grid.z)


def ladder_density(grid: rt.SlabGrid, intensity, intensity_p) -> float:
    """Inelastic ladder integrand at one outgoing detuning (without P)."""
    return float(grid.integrate(_vertex_weight(grid, intensity) * intensity_p))


def crossed_density(grid: rt.SlabGrid, intensity, cross, delta: float, delta_p: float) -> float:
    """Inelastic crossed integrand at one outgoing detuning (without P)."""
    z = grid.z
    a = complex_attenuation(delta, delta_p)
    kappa = mean_free_path_ratio(delta_p, delta)
    ez = np.exp(-z)
    integrand = (intensity * np.abs(cross) ** 2
                 - ez * np.real(np.exp(-a * z) * np.conj(cross))
                 - (intensity - ez) * np.exp(-(1.0 + kappa) * z))
    return 4.0 * float(grid.integrate(integrand))


def nl_ladder_elastic_scatt(grid: rt.SlabGrid, intensity) -> float:
    """Elastic nonlinear-scattering ladder per unit s; never positive."""
    return float(-2.0 * grid.integrate(_vertex_weight(grid, intensity) * intensity))


def nl_crossed_elastic_scatt(grid: rt.SlabGrid, intensity) -> float:
    """Elastic nonlinear-scattering crossed term per unit s."""
    z = grid.z
    return float(-8.0 * grid.integrate(intensity ** 3 - 2.0 * intensity * np.exp(-2.0 * z)
                                       + np.exp(-3.0 * z)))


def elastic_scattering_components(grid: rt.SlabGrid, intensity):
    """(L, C) of the elastic nonlinear scattering vertex per unit s."""
    return nl_ladder_elastic_scatt(grid, intensity), nl_crossed_elastic_scatt(grid, intensity)


def nl_ladder_prop(grid: rt.SlabGrid, intensity) -> float:
    """Ladder change from the intensity-dependent refractive index, per unit s."""
    ez = np.exp(-grid.z)
    return float(grid.integrate(intensity * (2.0 * intensity ** 2 - 2.0 * intensity[-1] ** 2
                                             + np.exp(-2.0 * grid.z) - ez)))


def nl_crossed_prop(grid: rt.SlabGrid, intensity) -> float:
    """Crossed counterpart of :func:`nl_ladder_prop`."""
    b = grid.b
    rest = grid.integrate(intensity * (np.exp(-grid.z) - np.exp(-2.0 * b)))
    return float(2.0 * nl_ladder_prop(grid, intensity) - 3.0 * rest
                 + 0.5 - 1.5 * np.exp(-2.0 * b) + np.exp(-3.0 * b))


def propagation_components(grid: rt.SlabGrid, intensity):
    """(L, C) from the nonlinear refractive index per unit s."""
    return nl_ladder_prop(grid, intensity), nl_crossed_prop(grid, intensity)


def oblique_ladder_components(b: float, mu: float, n_nodes: int = rt.DEFAULT_NODES,
                              *, tol: float = rt.DEFAULT_TOL):
    """Elastic ladder components for detection at exit cosine ``mu``.

    The laser still enters at normal incidence. Returns ``(L1, Ls, Lp)``:
    the linear ladder and the per-unit-s scattering and propagation terms.
    The propagation term is the first-order change of the ladder when the
    extinction along every segment is reduced by the local pump intensity
    (by 2 s I for diffuse and exit segments, by s (2 I - e^{-z}) for the
    entry segment). In a stratified medium the slab kernel keeps its form
    (1/2) E1(tau) with tau the optical depth difference, so its derivative
    is s e^{-|z - z'|} times the mean of I between z and z'. For mu = 1
    this reproduces :func:`propagation_components`.
    """
    if not 0 < mu <= 1:
        raise ValueError("mu must be in (0, 1]")
    grid = rt.SlabGrid(b, n_nodes)
    z, w = grid.z, grid.weights
    kmat = rt.kernel_matrix(grid, 1.0, 0.5)
    intensity = rt.fixed_point(kmat, np.exp(-z), tol)
    adjoint = rt.fixed_point(kmat, np.exp(-z / mu), tol)
    # running integrals from the surface
    cum_i = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(z) * (intensity[1:] + intensity[:-1]))])
    d_source = np.exp(-z) * (2.0 * cum_i - (1.0 - np.exp(-z)))
    d_exit = np.exp(-z / mu) * (2.0 / mu) * cum_i
    dz = np.abs(z[:, None] - z[None, :])
    di = np.abs(cum_i[:, None] - cum_i[None, :])
    mean_i = np.where(dz > 0, di / np.where(dz > 0, dz, 1.0), intensity[:, None])
    d_kernel = np.exp(-dz) * mean_i
    lp = w @ (adjoint * d_source) + (w * adjoint) @ d_kernel @ (w * intensity) + w @ (intensity * d_exit)
    ls = -2.0 * w @ (_vertex_weight(grid, intensity) * adjoint)
    l1 = w @ (intensity * np.exp(-z / mu))
    return float(l1), float(ls), float(lp)


# --- inelastic components ----------------------------------------------------

def spectral_nodes(delta: float, cutoff: float = SPECTRAL_CUTOFF,
                   order: int = SPECTRAL_GL_ORDER, tail_order: int = SPECTRAL_TAIL_ORDER):
    """Quadrature nodes and weights for integrals over the outgoing detuning.

    The window [delta - cutoff, delta + cutoff] is split at the spectral
    peaks and covered by Gauss-Legendre panels; the two tails beyond it are
    mapped onto (0, 1] by x = delta +- cutoff/t.
    """
    lo, hi = delta - cutoff, delta + cutoff
    edges = sorted({lo, hi, *(e for e in (0.0, 2.0 * delta) if lo < e < hi)})
    x, w = np.polynomial.legendre.leggauss(order)
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        nodes.append(0.5 * (b - a) * x + 0.5 * (a + b))
        weights.append(0.5 * (b - a) * w)
    if tail_order:
        xt, wt = np.polynomial.legendre.leggauss(tail_order)
        t = 0.5 * (xt + 1.0)
        jac = 0.5 * wt * cutoff / t ** 2
        nodes += [delta + cutoff / t, delta - cutoff / t]
        weights += [jac, jac]
    return np.concatenate(nodes), np.concatenate(weights)


@dataclass
class SpectralSolution:
    """Per-frequency solutions needed by the inelastic components."""

    delta: float
    nodes: np.ndarray
    weights: np.ndarray  # quadrature weight times P(delta')
    ladder: np.ndarray
    crossed: np.ndarray

    @property
    def L_in(self) -> float:
        return float(self.weights @ self.ladder)

    @property
    def C_in(self) -> float:
        return float(self.weights @ self.crossed)


def nl_ladder_inelastic(spectrum: SpectralSolution) -> float:
    """Inelastic ladder per unit s, the P-weighted sum of node densities."""
    return spectrum.L_in


def nl_crossed_inelastic(spectrum: SpectralSolution) -> float:
    """Inelastic crossed term per unit s."""
    return spectrum.C_in


def _node_densities(grid, intensity, delta, delta_p, tol):
    kappa = mean_free_path_ratio(delta_p, delta)
    ip = rt.solve_intensity(grid, kappa=kappa, tol=tol)
    g = rt.solve_cross(grid, delta, delta_p, tol=tol)
    return ladder_density(grid, intensity, ip), crossed_density(grid, intensity, g, delta, delta_p)


def solve_spectrum(grid: rt.SlabGrid, delta: float, intensity=None, nodes=None, *,
                   tol: float = rt.DEFAULT_TOL, workers: int = 1) -> SpectralSolution:
    """Ladder and crossed inelastic densities at every outgoing detuning node."""
    if intensity is None:
        intensity = rt.solve_intensity(grid, tol=tol)
    if nodes is None:
        nodes, qw = spectral_nodes(delta)
    else:
        nodes, qw = np.asarray(nodes, dtype=float), None

    def job(dp):
        return _node_densities(grid, intensity, delta, dp, tol)

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            res = list(ex.map(job, nodes))
    else:
        res = [job(dp) for dp in nodes]
    ladder = np.array([r[0] for r in res])
    crossed = np.array([r[1] for r in res])
    weights = (qw * inelastic_spectrum(delta, nodes)) if qw is not None \
        else np.full(len(nodes), np.nan)
    return SpectralSolution(delta, nodes, weights, ladder, crossed)


# --- public entry points -----------------------------------------------------

def assemble(params: MediumParams, n_nodes: int = rt.DEFAULT_NODES, *,
             tol: float = rt.DEFAULT_TOL, workers: int = 1) -> BistaticBreakdown:
    """All backscattering components for scalar photons."""
    if params.channel is not Channel.SCALAR:
        raise ValueError("scalar assembly requires channel='scalar'; "
                         "use nlcbs.montecarlo for the h||h channel")
    grid = rt.SlabGrid(params.b, n_nodes)
    intensity = rt.solve_intensity(grid, tol=tol)
    L1, C1, S1 = linear_components(grid, intensity)
    Ls, Cs = elastic_scattering_components(grid, intensity)
    Lp, Cp = propagation_components(grid, intensity)
    spec = solve_spectrum(grid, params.detuning, intensity, tol=tol, workers=workers)
    return BistaticBreakdown(L1, C1, S1, Ls, Cs, spec.L_in, spec.C_in, Lp, Cp)


@dataclass
class SpectralCurve:
    """Backscattered inelastic light resolved in the outgoing detuning."""

    detuning: np.ndarray
    ladder_density: np.ndarray
    crossed_density: np.ndarray
    ladder_error: np.ndarray | None = None
    crossed_error: np.ndarray | None = None
    ratio_error: np.ndarray | None = None  # error of C/L including the L-C covariance

    @property
    def eta(self) -> np.ndarray:
        return 1.0 + self.crossed_density / self.ladder_density

    @property
    def eta_error(self) -> np.ndarray | None:
        """One standard error of eta; zero for quadrature results."""
        if self.ratio_error is not None:
            return self.ratio_error
        if self.ladder_error is None:
            return np.zeros_like(self.crossed_density)
        r = self.crossed_density / self.ladder_density
        return np.abs(r) * np.hypot(self.crossed_error / self.crossed_density,
                                    self.ladder_error / self.ladder_density)


def inelastic_nodes(delta: float, detunings) -> np.ndarray:
    """Requested outgoing detunings without the elastic line delta' = delta."""
    dps = np.atleast_1d(np.asarray(detunings, dtype=float))
    return dps[dps != delta]


def _drop_dark(curve: SpectralCurve) -> SpectralCurve:
    # eta is undefined where no inelastic ladder light comes back
    keep = curve.ladder_density > 0
    if keep.all():
        return curve
    pick = (lambda v: None if v is None else v[keep])
    return SpectralCurve(curve.detuning[keep], curve.ladder_density[keep],
                         curve.crossed_density[keep], pick(curve.ladder_error),
                         pick(curve.crossed_error), pick(curve.ratio_error))


def spectral_enhancement(params: MediumParams, detunings, n_nodes: int = rt.DEFAULT_NODES, *,
                         tol: float = rt.DEFAULT_TOL, workers: int = 1) -> SpectralCurve:
    """Frequency-resolved inelastic enhancement factor 1 + C(delta')/L(delta').

    The node delta' = delta (the elastic line) and nodes without ladder
    light are left out of the returned curve.
    """
    if params.channel is not Channel.SCALAR:
        raise ValueError("use nlcbs.montecarlo.spectral_enhancement_mc for the h||h channel")
    nodes = inelastic_nodes(params.detuning, detunings)
    if nodes.size == 0:
        raise ValueError("no outgoing detunings left after removing the elastic line")
    grid = rt.SlabGrid(params.b, n_nodes)
    spec = solve_spectrum(grid, params.detuning, nodes=nodes, tol=tol, workers=workers)
    return _drop_dark(SpectralCurve(spec.nodes, spec.ladder, spec.crossed))
