"""Monte-Carlo estimators for polarized (and scalar) nonlinear backscattering.

Samples are grouped in fixed blocks of ``BLOCK`` consecutive indices. Each
block is reduced to per-channel sums and cross sums by a kernel, and the
blocks are merged in index order, so results depend on the seed and sample
count only, never on the number of workers.

The kernels come from the compiled extension ``_mc_core`` when it is
importable and from the pure-Python ``_mc_py`` otherwise; set the
environment variable ``NLCBS_BACKEND=python`` to force the fallback.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from . import _mc_py
from .core import Channel, MediumParams, spectrum_sampler
from .scalar import BistaticBreakdown, SpectralCurve, _drop_dark, inelastic_nodes

BLOCK = 1 << 14


def _load_backend(name: str | None = None):
    name = (name or os.environ.get("NLCBS_BACKEND", "auto")).lower()
    if name == "python":
        return _mc_py
    try:
        from . import _mc_core
    except ImportError:
        if name == "compiled":
            raise
        return _mc_py
    return _mc_core


backend = _load_backend()
BACKEND_NAME = "compiled" if backend is not _mc_py else "python"


def get_backend(name: str | None = None):
    """Kernel module for ``name`` in {'auto', 'compiled', 'python'}."""
    return _load_backend(name)


@dataclass(frozen=True)
class McEstimate:
    """Sample mean with its standard error."""

    mean: float
    std_error: float
    n_samples: int

    def __post_init__(self):
        if self.n_samples <= 0:
            raise ValueError("n_samples must be positive")

    def __add__(self, other: "McEstimate") -> "McEstimate":
        # sum of independent estimates
        return McEstimate(self.mean + other.mean, math.hypot(self.std_error, other.std_error),
                          min(self.n_samples, other.n_samples))

    def __mul__(self, k: float) -> "McEstimate":
        return McEstimate(self.mean * k, abs(k) * self.std_error, self.n_samples)

    __rmul__ = __mul__

    def zscore(self, reference: float) -> float:
        return (self.mean - reference) / self.std_error if self.std_error > 0 else math.inf

    def __iter__(self):
        yield self.mean
        yield self.std_error


@dataclass
class Moments:
    """Accumulated first and second moments of a vector-valued estimator."""

    sums: np.ndarray
    cross: np.ndarray
    n: int

    @property
    def mean(self) -> np.ndarray:
        return self.sums / self.n

    @property
    def cov(self) -> np.ndarray:
        """Covariance matrix of the channel means."""
        m = self.mean
        return (self.cross / self.n - np.outer(m, m)) / max(self.n - 1, 1)

    def estimate(self, channel: int) -> McEstimate:
        var = max(self.cov[channel, channel], 0.0)
        return McEstimate(float(self.mean[channel]), float(np.sqrt(var)), self.n)

    def ratio(self, num: int, den: int) -> McEstimate:
        """Ratio of two channel means with a delta-method error."""
        m, c = self.mean, self.cov
        r = m[num] / m[den]
        var = (c[num, num] - 2 * r * c[num, den] + r * r * c[den, den]) / m[den] ** 2
        return McEstimate(float(r), float(np.sqrt(max(var, 0.0))), self.n)


def default_cap(b: float) -> int:
    """Maximum number of scattering events per photon path."""
    return max(200, int(math.ceil(40 * b)))


def _blocks(n_samples: int):
    return [(s, min(s + BLOCK, n_samples)) for s in range(0, n_samples, BLOCK)]


def _run_block(kernel_name, backend_name, args, span):
    kern = getattr(get_backend(backend_name), kernel_name)
    return kern(args[0], span[0], span[1], *args[1:])


def _reduce(kernel_name: str, args: tuple, n_samples: int, workers: int = 1,
            backend_name: str | None = None) -> Moments:
    if n_samples <= 1:
        raise ValueError("need at least two samples for an error estimate")
    spans = _blocks(n_samples)
    job = partial(_run_block, kernel_name, backend_name or BACKEND_NAME, args)
    if workers > 1 and len(spans) > 1:
        with ProcessPoolExecutor(workers) as ex:
            parts = list(ex.map(job, spans))
    else:
        parts = [job(sp) for sp in spans]
    sums = parts[0][0].copy()
    cross = parts[0][1].copy()
    for s, c in parts[1:]:
        sums += s
        cross += c
    return Moments(sums, cross, n_samples)


def _is_vectorial(params: MediumParams) -> bool:
    return params.channel is Channel.HH


# --- estimators ----------------------------------------------------------------

def mc_linear(params: MediumParams, n_samples: int, seed: int = 0, *, workers: int = 1,
              cap: int | None = None, backend_name: str | None = None) -> Moments:
    """Linear ladder and crossed intensities plus path-order moments.

    Channels: 0 ladder, 1 crossed (single scattering removed),
    2 sum_n n w_n, 3 sum_n n^2 w_n.
    """
    cap = cap or default_cap(params.b)
    args = (seed, params.b, _is_vectorial(params), cap)
    return _reduce("linear_kernel", args, n_samples, workers, backend_name)


def _scatt_args(params, seed, mode, delta_p, cap):
    cap = cap or default_cap(params.b)
    if mode == 0:
        smp = spectrum_sampler(float(params.detuning))
        x = np.ascontiguousarray(smp.breakpoints, dtype=float)
        c = np.ascontiguousarray(smp.coefficients, dtype=float).ravel()
    else:
        x = np.zeros(2)
        c = np.zeros(4)
    return (seed, params.b, float(params.detuning), mode, float(delta_p),
            _is_vectorial(params), cap, x, c)


def mc_scattering(params: MediumParams, n_samples: int, seed: int = 0, *, elastic: bool = False,
                  delta_p: float | None = None, workers: int = 1, cap: int | None = None,
                  backend_name: str | None = None) -> Moments:
    """Nonlinear scattering vertex per unit s. Channels: 0 ladder, 1 crossed.

    By default the inelastic components are estimated, with the outgoing
    detuning drawn from the inelastic spectrum. ``elastic=True`` gives the
    elastic variant; a fixed ``delta_p`` gives the frequency-resolved
    densities (without the spectral weight).
    """
    if elastic and delta_p is not None:
        raise ValueError("elastic and delta_p are mutually exclusive")
    mode = 1 if elastic else (2 if delta_p is not None else 0)
    args = _scatt_args(params, seed, mode, 0.0 if delta_p is None else delta_p, cap)
    return _reduce("scatt_kernel", args, n_samples, workers, backend_name)


def mc_propagation(params: MediumParams, n_samples: int, seed: int = 0, *, workers: int = 1,
                   cap: int | None = None, backend_name: str | None = None) -> Moments:
    """Nonlinear average propagation per unit s. Channels: 0 ladder, 1 crossed."""
    cap = cap or default_cap(params.b)
    args = (seed, params.b, _is_vectorial(params), cap)
    return _reduce("prop_kernel", args, n_samples, workers, backend_name)


def mc_inelastic_ladder(params, n_samples, seed=0, **kw) -> McEstimate:
    return mc_scattering(params, n_samples, seed, **kw).estimate(0)


def mc_inelastic_crossed(params, n_samples, seed=0, **kw) -> McEstimate:
    return mc_scattering(params, n_samples, seed, **kw).estimate(1)


def mc_prop_ladder(params, n_samples, seed=0, **kw) -> McEstimate:
    return mc_propagation(params, n_samples, seed, **kw).estimate(0)


def mc_prop_crossed(params, n_samples, seed=0, **kw) -> McEstimate:
    return mc_propagation(params, n_samples, seed, **kw).estimate(1)


def mc_linear_pair(params, n_samples, seed=0, **kw) -> tuple[McEstimate, McEstimate]:
    m = mc_linear(params, n_samples, seed, **kw)
    return m.estimate(0), m.estimate(1)


def _spawn(seed: int, k: int) -> int:
    """Independent seed for the k-th estimator of a composite run."""
    return int(np.random.SeedSequence([seed, k]).generate_state(1, dtype=np.uint64)[0])


def vectorial_breakdown(params: MediumParams, n_samples: int, seed: int = 0, *,
                        workers: int = 1, inelastic: bool = True,
                        n_linear: int | None = None) -> BistaticBreakdown:
    """All components by Monte-Carlo, for the channel given in ``params``.

    Each estimator uses its own random streams; ``mc_errors`` holds the
    standard errors of every component.
    """
    lin = mc_linear(params, n_linear or n_samples, _spawn(seed, 0), workers=workers)
    el = mc_scattering(params, n_samples, _spawn(seed, 1), elastic=True, workers=workers)
    prop = mc_propagation(params, n_samples, _spawn(seed, 2), workers=workers)
    L1, C1 = lin.estimate(0), lin.estimate(1)
    Ls, Cs = el.estimate(0), el.estimate(1)
    Lp, Cp = prop.estimate(0), prop.estimate(1)
    if inelastic:
        inel = mc_scattering(params, n_samples, _spawn(seed, 3), workers=workers)
        Li, Ci = inel.estimate(0), inel.estimate(1)
    else:
        Li = Ci = McEstimate(math.nan, math.nan, n_samples)
    single = 0.0 if _is_vectorial(params) else 0.5 * (1.0 - math.exp(-2.0 * params.b))
    errors = {"L_el_1": L1.std_error, "C_el_1": C1.std_error, "L_el_2_scatt": Ls.std_error,
              "C_el_2_scatt": Cs.std_error, "L_in_2": Li.std_error, "C_in_2": Ci.std_error,
              "L_el_2_prop": Lp.std_error, "C_el_2_prop": Cp.std_error}
    out = BistaticBreakdown(L1.mean, C1.mean, single, Ls.mean, Cs.mean, Li.mean, Ci.mean,
                            Lp.mean, Cp.mean, mc_errors=errors)
    return out


def gamma_error(bd: BistaticBreakdown, which: str, parts=("scatt", "in", "prop")) -> float:
    """Standard error of a normalized slope built from independent estimates."""
    e = bd.mc_errors
    key = {"scatt": "{}_el_2_scatt", "in": "{}_in_2", "prop": "{}_el_2_prop"}
    num = sum(getattr(bd, key[p].format(which)) for p in parts)
    den = getattr(bd, f"{which}_el_1")
    var_num = sum(e[key[p].format(which)] ** 2 for p in parts)
    var_den = e[f"{which}_el_1"] ** 2
    r = num / den
    return float(np.sqrt(var_num / den ** 2 + r * r * var_den / den ** 2))


def spectral_enhancement_mc(params: MediumParams, detunings, n_samples: int, seed: int = 0, *,
                            workers: int = 1) -> SpectralCurve:
    """Frequency-resolved enhancement of the inelastic light by Monte-Carlo."""
    dps = inelastic_nodes(params.detuning, detunings)
    if dps.size == 0:
        raise ValueError("no outgoing detunings left after removing the elastic line")
    lad, crs, le, ce, cov = [], [], [], [], []
    for k, dp in enumerate(dps):
        m = mc_scattering(params, n_samples, _spawn(seed, 100 + k), delta_p=float(dp),
                          workers=workers)
        lad.append(m.mean[0])
        crs.append(m.mean[1])
        r = m.ratio(1, 0)
        le.append(m.estimate(0).std_error)
        ce.append(m.estimate(1).std_error)
        cov.append(r.std_error)
    return _drop_dark(SpectralCurve(dps, np.array(lad), np.array(crs), np.array(le),
                                    np.array(ce), np.array(cov)))


def path_moments(b: float, n_samples: int, seed: int = 0, *, workers: int = 1,
                 cap: int | None = None) -> tuple[McEstimate, McEstimate]:
    """Mean and mean square number of scattering events of backscattered light."""
    m = mc_linear(MediumParams(0.0, b), n_samples, seed, workers=workers, cap=cap)
    return m.ratio(2, 0), m.ratio(3, 0)


# --- single-path utilities -------------------------------------------------------

@dataclass
class PhotonPath:
    """Vertices, steps and polarizations of one sampled photon path."""

    vertices: np.ndarray          # (n, 3) positions, z = depth
    directions: np.ndarray        # (n - 1, 3) unit step directions
    step_lengths: np.ndarray      # (n - 1,)
    polarizations: np.ndarray     # (n, 3) complex, incoming polarization at each vertex
    exit_step: float = math.nan   # length of the step that left the slab
    exit_direction: np.ndarray = field(default_factory=lambda: np.full(3, np.nan))

    @property
    def n_events(self) -> int:
        return len(self.vertices)


def sample_path(seed: int, index: int, origin, b: float, mu: float = 1.0,
                polarization=(1.0, 0.0, 0.0), max_events: int | None = None) -> PhotonPath:
    """Sample one random walk from ``origin`` with the per-sample stream (seed, index).

    ``mu`` is the extinction rate of the walking photon in units of the
    laser's 1/ell, i.e. ell / ell(delta_path); steps have mean 1/mu.
    """
    origin = np.asarray(origin, dtype=float)
    if not 0.0 <= origin[2] <= b:
        raise ValueError("origin must lie inside the slab")
    return _mc_py.sample_path(seed, index, origin, b, mu, np.asarray(polarization, complex),
                              max_events or default_cap(b))
