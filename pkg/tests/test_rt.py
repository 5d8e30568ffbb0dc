import pickle

import mpmath
import numpy as np
import pytest

from nlcbs import rt
from nlcbs.core import complex_attenuation, mean_free_path_ratio

from oracles import path_sum, transverse_kernel_mc


def test_kernel_elastic_value():
    k = rt.slab_kernel(1.0)
    assert not k.singular
    assert k.value.real == pytest.approx(0.109692, abs=5e-7)
    assert k.value == pytest.approx(0.5 * float(mpmath.e1(1)), rel=1e-14)


@pytest.mark.parametrize("dz", [1e-6, 0.01, 0.3, 2.0, 15.0])
@pytest.mark.parametrize("a", [1.0, 0.75 - 0.25j, 0.53 + 1.9j, 3.0 + 0.5j])
def test_kernel_against_mpmath(dz, a):
    c = 0.5 / (1 + 4j)
    ref = complex(c * mpmath.e1(mpmath.mpc(complex(a)) * dz))
    assert rt.slab_kernel(dz, a, c).value == pytest.approx(ref, rel=1e-12)


def test_kernel_transverse_reduction_mc():
    rng = np.random.default_rng(7)
    mean, err = transverse_kernel_mc(1.0, 2_000_000, rng)
    assert abs(mean - rt.slab_kernel(1.0).value.real) < 3 * err


@pytest.mark.parametrize("a", [1.0, 0.53 - 1.5j])
def test_kernel_transverse_reduction_quadrature(a):
    # radial integral of the 3-D kernel, done by adaptive quadrature in mpmath
    dz = 0.7
    f = lambda rho: rho * mpmath.exp(-a * mpmath.sqrt(dz ** 2 + rho ** 2)) / (2 * (dz ** 2 + rho ** 2))
    ref = complex(mpmath.quad(f, [0, 1, 5, mpmath.inf]))
    assert rt.slab_kernel(dz, a).value == pytest.approx(ref, rel=1e-10)


def test_kernel_singular_and_domain():
    k = rt.slab_kernel(0.0)
    assert k.singular and np.isinf(k.value.real)
    # log divergence: K(d) + (1/2) ln d approaches a constant
    v = [rt.slab_kernel(d).value.real + 0.5 * np.log(d) for d in (1e-6, 1e-8)]
    assert v[0] == pytest.approx(v[1], abs=1e-5)
    with pytest.raises(ValueError):
        rt.slab_kernel(1.0, a=-1.0 + 1j)


def test_kernel_reciprocity():
    for d in (0.1, 1.3, 4.0):
        assert rt.slab_kernel(d).value == rt.slab_kernel(-d).value
    g = rt.SlabGrid(1.0, 33)
    k = rt.kernel_matrix(g, 0.75 - 0.25j, 0.5 / (1 + 2j))
    # the boundary columns carry half hats; all other couplings are symmetric
    np.testing.assert_array_equal(k[1:-1, 1:-1], k[1:-1, 1:-1].T)
    np.testing.assert_array_equal(k, k[::-1, ::-1])


def test_kernel_matrix_row_sums():
    # applied to f = 1 the rows give the kernel integral 1 - E2(z)/2 - E2(b - z)/2
    b = 2.0
    g = rt.SlabGrid(b, 257)
    k = rt.kernel_matrix(g)
    e2 = np.vectorize(lambda x: float(mpmath.expint(2, x)) if x > 0 else 1.0)
    exact = 1.0 - 0.5 * e2(g.z) - 0.5 * e2(b - g.z)
    np.testing.assert_allclose(k.sum(axis=1), exact, atol=1e-12)


def test_grid_validation():
    g = rt.SlabGrid(0.5, 11)
    assert g.z[0] == 0 and g.z[-1] == 0.5
    assert np.all(np.diff(g.z) > 0) and np.all(g.weights > 0)
    assert g.weights.sum() == pytest.approx(0.5, rel=1e-14)
    with pytest.raises(ValueError):
        rt.SlabGrid(0.0)
    with pytest.raises(ValueError):
        rt.SlabGrid(1.0, 2)


def test_thin_slab_is_ballistic():
    g = rt.SlabGrid(1e-6, 16)
    i = rt.solve_intensity(g)
    np.testing.assert_allclose(i, np.exp(-g.z), rtol=1e-5)


@pytest.mark.parametrize("b", [0.25, 0.5, 1.0, 2.0, 4.0])
def test_intensity_exceeds_ballistic(b):
    g = rt.SlabGrid(b)
    i = rt.solve_intensity(g)
    assert np.all(i >= np.exp(-g.z))


def test_intensity_grows_with_thickness():
    i0 = [rt.solve_intensity(rt.SlabGrid(b))[0] for b in (0.25, 0.5, 1.0, 2.0)]
    assert np.all(np.diff(i0) > 0)


@pytest.mark.parametrize("b", [0.25, 0.5, 1.0, 2.0])
def test_grid_refinement(b):
    coarse = rt.solve_intensity(rt.SlabGrid(b, 512))[0]
    fine = rt.solve_intensity(rt.SlabGrid(b, 1023))[0]
    assert abs(coarse / fine - 1) < 1e-3


@pytest.mark.parametrize("b", [0.5, 2.0, 4.0])
def test_iteration_contracts(b):
    g = rt.SlabGrid(b, 128)
    k = rt.kernel_matrix(g)
    term = np.exp(-g.z)
    sizes = []
    for _ in range(40):
        term = k @ term
        sizes.append(np.max(np.abs(term)))
    assert np.all(np.diff(sizes) < 0)


def test_detuned_intensity():
    g = rt.SlabGrid(1.0, 256)
    kappa = 1.0 / mean_free_path_ratio(0.0, 0.5)  # light at 0.5 in a resonant grid
    i = rt.solve_intensity(g, 0.5, 0.0)
    np.testing.assert_array_equal(i, rt.solve_intensity(g, kappa=kappa))
    assert np.all(i >= np.exp(-kappa * g.z))
    # a more transparent medium at the detuned frequency
    assert i[0] < rt.solve_intensity(g)[0]
    np.testing.assert_array_equal(rt.intensity_at(g, 0.0, 0.5), i)


def test_intensity_rejects_bad_kappa():
    with pytest.raises(ValueError):
        rt.solve_intensity(rt.SlabGrid(1.0, 16), kappa=0.0)


def test_convergence_error():
    with pytest.raises(rt.ConvergenceError) as info:
        rt.solve_intensity(rt.SlabGrid(2.0, 64), max_iter=3)
    assert info.value.residual > 0
    copy = pickle.loads(pickle.dumps(info.value))
    assert copy.residual == info.value.residual and str(copy) == str(info.value)


@pytest.mark.parametrize("delta", [0.0, 0.8, -1.5])
def test_cross_field_elastic_limit(delta):
    g = rt.SlabGrid(1.0)
    cross = rt.solve_cross(g, delta, delta)
    assert np.all(cross.imag == 0)
    np.testing.assert_allclose(cross.real, rt.solve_intensity(g), rtol=0, atol=1e-10)


def test_cross_field_dephasing():
    g = rt.SlabGrid(0.5)
    cross = rt.solve_cross(g, 0.0, 2.0)
    i = rt.solve_intensity(g)
    assert np.all(np.abs(cross[1:]) < i[1:])


def test_cross_field_thin_slab():
    g = rt.SlabGrid(1e-6, 16)
    a = complex_attenuation(0.3, 1.7)
    np.testing.assert_allclose(rt.solve_cross(g, 0.3, 1.7), np.exp(-a * g.z), rtol=1e-5)


def test_intensity_path_sum_oracle():
    rng = np.random.default_rng(11)
    g = rt.SlabGrid(0.5)
    i = rt.solve_intensity(g)
    for z0, val in ((0.0, i[0]), (0.25, np.interp(0.25, g.z, i))):
        mean, err = path_sum(z0, 0.5, 400_000, rng)
        assert abs(mean - val) < 3 * err


def test_cross_field_path_sum_oracle():
    rng = np.random.default_rng(12)
    g = rt.SlabGrid(0.5)
    delta, dp = 0.0, 2.0
    a, c = rt.cross_parameters(delta, dp)
    cross = rt.solve_cross(g, delta, dp)
    mean, err = path_sum(0.0, 0.5, 400_000, rng, a=a, c=c)
    assert abs(mean.real - cross[0].real) < 3 * err.real
    assert abs(mean.imag - cross[0].imag) < 3 * err.imag
