import numpy as np
import pytest

from nlcbs import polarization as pol

EX = np.array([1.0, 0.0, 0.0], dtype=complex)
EY = np.array([0.0, 1.0, 0.0], dtype=complex)
EZ = np.array([0.0, 0.0, 1.0], dtype=complex)


def test_project_examples():
    np.testing.assert_array_equal(pol.project(EX, [0, 0, 1.0]), EX)
    np.testing.assert_allclose(pol.project(EZ, [0, 0, 1.0]), 0.0)
    rng = np.random.default_rng(0)
    eps = pol.random_polarization(rng, 100)
    d = rng.normal(size=(100, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    p = pol.project(eps, d)
    np.testing.assert_allclose(np.sum(p * d, axis=1), 0.0, atol=1e-14)
    np.testing.assert_allclose(pol.project(p, d), p, atol=1e-14)
    with pytest.raises(ValueError):
        pol.project(EX, [0, 0, 2.0])


def test_ladder_weight_examples():
    assert pol.pi_ladder(EX, EX, EX) == pytest.approx(1.0)
    assert pol.pi_ladder(EX, EX, EY) == pytest.approx(0.0)
    e = np.array([1.0, 1.0, 0.0]) / np.sqrt(2)
    assert pol.pi_ladder(EX, e, EZ) == pytest.approx(0.0)


def test_crossed_weight_examples():
    assert pol.pi_crossed(EX, EX, EX, EX, EX) == pytest.approx(1.0)
    e = np.array([1.0, 2.0, -0.5]) / np.sqrt(5.25)
    assert pol.pi_crossed(e, e, e, e, e).real == pytest.approx(pol.pi_ladder(e, e, e))
    # orthogonal input and output polarizations close every channel
    assert pol.pi_crossed(EX, EX, EY, EY, EX) == pytest.approx(0.0)


def test_propagation_weight_examples():
    assert pol.pi_prop_ladder(EX, EX, EX) == pytest.approx(1.0)
    assert pol.pi_prop_crossed(EX, EX, EX, EX, EX) == pytest.approx(1.0)
    assert pol.pi_prop_ladder(EX, EY, EY) == pytest.approx(0.0)


def test_weights_are_real_for_random_input():
    rng = np.random.default_rng(2)
    e1, e2, e3 = (pol.random_polarization(rng, 1000) for _ in range(3))
    assert np.isrealobj(pol.pi_ladder(e1, e2, e3))
    assert np.all(pol.pi_ladder(e1, e2, e3) >= -1e-15)


def test_random_polarization_normalized():
    rng = np.random.default_rng(3)
    e = pol.random_polarization(rng, 10_000)
    np.testing.assert_allclose(np.linalg.norm(e, axis=1), 1.0, rtol=1e-14)
    # isotropy: <e e^+> = 1/3
    rho = np.einsum("ni,nj->ij", e, e.conj()) / len(e)
    np.testing.assert_allclose(rho, np.eye(3) / 3, atol=0.01)


def test_transverse_pair_overlap():
    rng = np.random.default_rng(4)
    e1, e3 = pol.random_transverse_pair(rng, 200_000)
    np.testing.assert_allclose(np.linalg.norm(e1, axis=1), 1.0, rtol=1e-13)
    ov = np.abs(pol.dot(e1, e3)) ** 2
    assert abs(ov.mean() - 0.5) < 3 * ov.std() / np.sqrt(len(ov))


def test_polarization_averages():
    avg = pol.polarization_averages(10 ** 6, seed=5)
    targets = {"ladder": 2 / 9, "crossed": 1 / 6, "prop_ladder": 1 / 3, "prop_crossed": 1 / 6}
    for key, value in targets.items():
        assert abs(avg[key].zscore(value)) < 3, (key, avg[key])
    ratio = avg["crossed"].mean / avg["ladder"].mean
    assert ratio == pytest.approx(0.75, abs=0.01)
    assert avg["prop_crossed"].mean / avg["prop_ladder"].mean == pytest.approx(0.5, abs=0.01)
