"""Linear radiative transfer in a slab: intensities and cross fields.

Both quantities obey a one-dimensional Fredholm equation of the second kind
with an exponential-integral kernel,

    f(z) = f0(z) + p * int_0^b E1(a |z - z'|) f(z') dz',

which is discretized on a uniform grid by product integration: f is taken
piecewise linear between nodes and the kernel is integrated exactly against
the hat functions, which absorbs the logarithmic singularity at z = z'.
The resulting matrix is symmetric Toeplitz, so all its entries follow from
two length-N tables of moment integrals.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.linalg import toeplitz
from scipy.special import exp1

from .core import complex_attenuation, mean_free_path_ratio

DEFAULT_NODES = 512
DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10_000


class ConvergenceError(RuntimeError):
    """Fixed-point iteration did not reach the requested tolerance."""

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual

    def __reduce__(self):
        return type(self), (self.args[0], self.residual)


class KernelValue(NamedTuple):
    value: complex
    singular: bool


@dataclass(frozen=True)
class SlabGrid:
    """Uniform grid on [0, b] with trapezoidal quadrature weights."""

    b: float
    n_nodes: int = DEFAULT_NODES
    z: np.ndarray = field(init=False, repr=False, compare=False)
    weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.b > 0:
            raise ValueError(f"optical thickness must be > 0, got {self.b}")
        if self.n_nodes < 3:
            raise ValueError("need at least 3 nodes")
        z = np.linspace(0.0, self.b, self.n_nodes)
        w = np.full(self.n_nodes, self.h)
        w[0] = w[-1] = 0.5 * self.h
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "weights", w)

    @property
    def h(self) -> float:
        return self.b / (self.n_nodes - 1)

    def integrate(self, values) -> complex:
        """Trapezoidal integral of nodal values over the slab."""
        return self.weights @ values


def slab_kernel(dz: float, a: complex = 1.0, prefactor: complex = 0.5) -> KernelValue:
    """Point value ``prefactor * E1(a |dz|)`` of the slab kernel.

    The kernel diverges logarithmically at dz = 0; there the value is
    infinite and ``singular`` is set. Solvers never evaluate it pointwise.
    """
    dz = abs(float(dz))
    if np.real(a) <= 0:
        raise ValueError("Re(a) must be positive")
    if dz == 0.0:
        return KernelValue(complex(np.inf), True)
    return KernelValue(complex(prefactor * exp1(complex(a) * dz)), False)


def _expm1_series(y):
    """1 - (1 + y) e^{-y}, accurate for small |y|."""
    y = np.asarray(y, dtype=complex)
    out = np.empty_like(y)
    small = np.abs(y) < 0.1
    ys = y[small]
    term = ys * ys / 2.0
    acc = np.zeros_like(ys)
    for n in range(2, 20):
        acc += (n - 1) * term
        term = -term * ys / (n + 1)
    out[small] = acc
    yl = y[~small]
    out[~small] = 1.0 - (1.0 + yl) * np.exp(-yl)
    return out


def _primitives(x, a):
    """P0(x) = int_0^x E1(a t) dt and P1(x) = int_0^x t E1(a t) dt."""
    x = np.asarray(x, dtype=float)
    a = complex(a)
    y = a * x
    e1 = np.zeros_like(y)
    pos = x > 0
    e1[pos] = exp1(y[pos])
    p0 = x * e1 - np.expm1(-y) / a
    p1 = 0.5 * x * x * e1 + _expm1_series(y) / (2.0 * a * a)
    return p0, p1


def _moment_tables(n: int, h: float, a: complex):
    """Hat-function moments of E1(a d) over the intervals [m h, (m+1) h].

    near[m] weights the interval end closest to the collocation point,
    far[m] the end farther away; near[m] + far[m] = int E1 over the interval.
    """
    x = h * np.arange(n + 1)
    p0, p1 = _primitives(x, a)
    d0 = np.diff(p0)
    d1 = np.diff(p1)
    m = np.arange(n)
    near = ((m + 1) * h * d0 - d1) / h
    far = (d1 - m * h * d0) / h
    return near, far


def kernel_matrix(grid: SlabGrid, a: complex = 1.0, prefactor: complex = 0.5) -> np.ndarray:
    """Product-integration matrix of ``prefactor * E1(a|z - z'|)`` on ``grid``.

    ``K @ f`` approximates ``prefactor * int_0^b E1(a|z_i - z'|) f(z') dz'``
    for f piecewise linear between the nodes.
    """
    n = grid.n_nodes
    near, far = _moment_tables(n - 1, grid.h, a)
    # node j's hat function covers the interval on each side of z_j; seen from
    # z_i with m = |i - j| > 0 one of them has z_j as its near end, the other
    # as its far end
    near_p = np.concatenate([near, [0.0]])
    col = near_p + np.concatenate([[0.0], far])
    col[0] = 2.0 * near[0]
    k = toeplitz(col, col)  # symmetric, not Hermitian
    # the boundary nodes only carry the half of the hat inside the slab
    k[:, 0] -= near_p
    k[:, -1] -= near_p[::-1]
    if np.isreal(a) and np.isreal(prefactor):
        return complex(prefactor).real * k.real
    return prefactor * k


def fixed_point(kmat: np.ndarray, source: np.ndarray, tol: float = DEFAULT_TOL,
                max_iter: int = DEFAULT_MAX_ITER) -> np.ndarray:
    """Solve f = source + K f by iterating from the ballistic term.

    Each iterate adds one more scattering order, so the result is the
    truncated Neumann series. The stopping criterion is the sup-norm of the
    last increment relative to the sup-norm of the solution.
    """
    f = source.copy()
    term = source
    scale = max(np.max(np.abs(source)), np.finfo(float).tiny)
    for _ in range(max_iter):
        term = kmat @ term
        f = f + term
        inc = np.max(np.abs(term))
        if inc <= tol * max(scale, np.max(np.abs(f))):
            return f
        if not np.isfinite(inc):
            break
    raise ConvergenceError(f"fixed-point iteration stalled after {max_iter} steps "
                           f"(last increment {inc:.3e})", inc)


def solve_intensity(grid: SlabGrid, delta: float = 0.0, delta_ref: float | None = None, *,
                    kappa: float | None = None, tol: float = DEFAULT_TOL,
                    max_iter: int = DEFAULT_MAX_ITER) -> np.ndarray:
    """Average intensity I(z) inside the slab for backward-direction escape.

    Parameters
    ----------
    grid : SlabGrid
        Depth grid in mean free paths at ``delta_ref``.
    delta : float
        Detuning of the light whose intensity is wanted.
    delta_ref : float, optional
        Detuning defining the length unit of ``grid``; defaults to ``delta``.
    kappa : float, optional
        ell(delta_ref) / ell(delta) given directly; overrides the detunings.

    Returns
    -------
    ndarray
        I(z) normalized to a unit incident flux; I(z) >= e^{-kappa z}.
    """
    if kappa is None:
        kappa = 1.0 if delta_ref is None else mean_free_path_ratio(delta, delta_ref)
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    kmat = kernel_matrix(grid, kappa, 0.5 * kappa)
    return fixed_point(kmat, np.exp(-kappa * grid.z), tol, max_iter)


def cross_parameters(delta: float, delta_p: float):
    """(a, c) for the cross field: attenuation and the kernel prefactor 2c."""
    a = complex_attenuation(delta, delta_p)
    c = (1.0 + 2j * delta) / (1.0 + 2j * delta_p)
    return a, c


def solve_cross(grid: SlabGrid, delta: float, delta_p: float, *, tol: float = DEFAULT_TOL,
                max_iter: int = DEFAULT_MAX_ITER) -> np.ndarray:
    """Mixed-frequency field correlation g(z) = <E_delta E*_delta'>(z).

    Reduces to the real intensity when delta' = delta.
    """
    a, c = cross_parameters(delta, delta_p)
    kmat = kernel_matrix(grid, a, 0.5 * c)
    return fixed_point(kmat, np.exp(-a * grid.z), tol, max_iter)


def intensity_at(grid: SlabGrid, delta: float, delta_p: float, **kw) -> np.ndarray:
    """Intensity at frequency delta' on a grid measured in laser mean free paths."""
    return solve_intensity(grid, delta_p, delta, **kw)
