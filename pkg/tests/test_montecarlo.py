import numpy as np
import pytest

from nlcbs import montecarlo as mc
from nlcbs import rt, scalar
from nlcbs.core import Channel, MediumParams

HALF = MediumParams(0.0, 0.5)
HALF_HH = MediumParams(0.0, 0.5, channel=Channel.HH)


def _close(est, value, k=3.0):
    return abs(est.mean - value) <= k * est.std_error


def test_estimate_container():
    e = mc.McEstimate(1.0, 0.1, 10)
    assert tuple(e) == (1.0, 0.1)
    s = e + mc.McEstimate(2.0, 0.2, 20)
    assert s.mean == 3.0 and s.std_error == pytest.approx(np.hypot(0.1, 0.2))
    assert (2 * e).std_error == pytest.approx(0.2)
    with pytest.raises(ValueError):
        mc.McEstimate(0.0, 0.0, 0)


def test_rejects_single_sample():
    with pytest.raises(ValueError):
        mc.mc_linear(HALF, 1)


@pytest.mark.parametrize("params", [HALF, HALF_HH])
@pytest.mark.parametrize("kernel", ["linear", "elastic", "inelastic", "prop"])
def test_backends_agree(params, kernel):
    pytest.importorskip("nlcbs._mc_core")
    n = 300

    def run(name):
        if kernel == "linear":
            return mc.mc_linear(params, n, 9, backend_name=name)
        if kernel == "prop":
            return mc.mc_propagation(params, n, 9, backend_name=name)
        return mc.mc_scattering(params, n, 9, elastic=kernel == "elastic", backend_name=name)

    a, b = run("python"), run("compiled")
    np.testing.assert_allclose(a.sums, b.sums, rtol=1e-12, atol=1e-300)
    np.testing.assert_allclose(a.cross, b.cross, rtol=1e-12, atol=1e-300)


def test_worker_count_does_not_change_results():
    n = 3 * mc.BLOCK + 17
    a = mc.mc_linear(HALF_HH, n, 4, workers=1)
    b = mc.mc_linear(HALF_HH, n, 4, workers=2)
    np.testing.assert_array_equal(a.sums, b.sums)
    np.testing.assert_array_equal(a.cross, b.cross)


def test_same_seed_same_result():
    a = mc.mc_propagation(HALF_HH, 5000, 21)
    b = mc.mc_propagation(HALF_HH, 5000, 21)
    np.testing.assert_array_equal(a.sums, b.sums)
    assert not np.array_equal(a.sums, mc.mc_propagation(HALF_HH, 5000, 22).sums)


def test_cap_insensitivity():
    p = MediumParams(0.0, 1.0, channel=Channel.HH)
    short = mc.mc_scattering(p, 20_000, 5, elastic=True, cap=21)
    long = mc.mc_scattering(p, 20_000, 5, elastic=True, cap=mc.default_cap(1.0))
    for ch in (0, 1):
        diff = abs(short.mean[ch] - long.mean[ch])
        assert diff < long.estimate(ch).std_error
    assert mc.default_cap(0.5) == 200 and mc.default_cap(10.0) == 400


def test_hh_has_no_single_scattering():
    thin = MediumParams(0.0, 1e-3, channel=Channel.HH)
    lad, crs = mc.mc_linear_pair(thin, 50_000, 1)
    # only double and higher orders survive: O(b^2) instead of O(b)
    assert lad.mean < 1e-2 * 1e-3
    path = mc.sample_path(0, 0, (0, 0, 1e-4), 1e-3, polarization=(1 / np.sqrt(2), 1j / np.sqrt(2), 0))
    e = path.polarizations[0]
    # backscattering straight back into the conjugate (same helicity) channel
    assert abs(np.dot(e, e)) == pytest.approx(0.0, abs=1e-15)


def test_hh_linear_enhancement_is_two():
    m = mc.mc_linear(HALF_HH, 200_000, 2)
    r = m.ratio(1, 0)
    # reciprocity makes every path's crossed weight equal its ladder weight
    assert _close(r, 1.0)
    assert 1.0 + r.mean == pytest.approx(2.0, abs=1e-12)


@pytest.mark.parametrize("b", [0.25, 1.0])
def test_scalar_linear_matches_quadrature(b):
    g = rt.SlabGrid(b)
    i = rt.solve_intensity(g)
    lad, crs = mc.mc_linear_pair(MediumParams(0.0, b), 200_000, 3)
    assert _close(lad, scalar.linear_ladder(g, i))
    assert _close(crs, scalar.linear_crossed(g, i)[0])


def test_scalar_nonlinear_matches_quadrature():
    bd = scalar.assemble(HALF, 256)
    el = mc.mc_scattering(HALF, 100_000, 6, elastic=True)
    pr = mc.mc_propagation(HALF, 100_000, 7)
    inel = mc.mc_scattering(HALF, 100_000, 8)
    assert _close(el.estimate(0), bd.L_el_2_scatt)
    assert _close(el.estimate(1), bd.C_el_2_scatt)
    assert _close(pr.estimate(0), bd.L_el_2_prop)
    assert _close(pr.estimate(1), bd.C_el_2_prop)
    assert _close(inel.estimate(0), bd.L_in_2)
    assert _close(inel.estimate(1), bd.C_in_2)


def test_propagation_vanishes_for_thin_slab():
    m = mc.mc_propagation(MediumParams(0.0, 1e-3, channel=Channel.HH), 20_000, 1)
    assert abs(m.mean[0]) < 1e-5 and abs(m.mean[1]) < 1e-5


def test_hh_elastic_slopes_rough():
    bd = mc.vectorial_breakdown(HALF_HH, 200_000, 31, inelastic=False)
    gl = (bd.L_el_2_scatt + bd.L_el_2_prop) / bd.L_el_1
    gc = (bd.C_el_2_scatt + bd.C_el_2_prop) / bd.C_el_1
    el, ec = (mc.gamma_error(bd, w, ("scatt", "prop")) for w in ("L", "C"))
    assert abs(gl + 7.04) < 3 * el
    assert abs(gc + 9.56) < 3 * ec
    assert bd.S_el_1 == 0.0
    assert np.isnan(bd.L_in_2)


def test_spectral_curve_hh_bounded():
    c = mc.spectral_enhancement_mc(HALF_HH, [-1.0, -0.25, 0.0, 0.25, 1.0], 50_000, 3)
    assert 0.0 not in c.detuning
    assert np.all(c.eta <= 2.5 + 3 * c.eta_error)
    assert np.all(c.eta_error > 0)


def test_spectral_curve_scalar_mode_matches_quadrature():
    dps = [0.5, 1.5]
    q = scalar.spectral_enhancement(HALF, dps, 256)
    m = mc.spectral_enhancement_mc(HALF, dps, 100_000, 4)
    assert np.all(np.abs(m.ladder_density - q.ladder_density) < 3 * m.ladder_error)
    assert np.all(np.abs(m.crossed_density - q.crossed_density) < 3 * m.crossed_error)


def test_path_statistics():
    n1, n2 = mc.path_moments(0.5, 50_000, 1)
    n1b, _ = mc.path_moments(2.0, 50_000, 1)
    assert 1.0 < n1.mean < n1b.mean
    assert n2.mean > n1.mean ** 2


def test_sample_path_geometry():
    steps = []
    for k in range(3000):
        p = mc.sample_path(17, k, (0.0, 0.0, 1.0), 2.0, mu=0.7)
        steps.extend(p.step_lengths)
        steps.append(p.exit_step)
        np.testing.assert_allclose(np.diff(p.vertices, axis=0),
                                   p.directions * p.step_lengths[:, None], atol=1e-12)
        assert np.all((p.vertices[:, 2] >= 0) & (p.vertices[:, 2] <= 2.0))
        for d, e in zip(p.directions, p.polarizations[1:]):
            assert abs(np.dot(d, e)) < 1e-12
    steps = np.array(steps)
    assert abs(steps.mean() - 1 / 0.7) < 3 * steps.std() / np.sqrt(len(steps))
    with pytest.raises(ValueError):
        mc.sample_path(0, 0, (0, 0, 3.0), 2.0)
