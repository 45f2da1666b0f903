import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from walshwalk.distributions import RngStream
from walshwalk.reference import (
    OscParams,
    SbmParams,
    density_table,
    osc_drift_coefficient,
    psi_map,
    reflecting_local_time_oracle,
    sbm_cdf,
    sbm_density,
    sbm_sample,
    sbm_sample_origin,
    wbm_marginal_sample,
    write_density_csv,
)
from walshwalk.scaling import ks_critical, phi_map

RNG = np.random.default_rng(2024)
TRIPLES = [(float(RNG.uniform(-1, 1)), float(RNG.uniform(0.2, 3)), float(RNG.uniform(-2, 2)))
           for _ in range(3)]


def quad_density(p, lo, hi):
    total, pieces = 0.0, [lo, min(0.0, hi), hi] if lo < 0 < hi else [lo, hi]
    for a, b in zip(pieces, pieces[1:]):
        total += integrate.quad(lambda y: sbm_density(p, y), a, b, epsabs=1e-12, epsrel=1e-12, limit=200)[0]
    return total


def test_gamma_zero_is_gaussian():
    p = SbmParams(0.0, 2.0, 0.5)
    y = np.linspace(-4, 4, 17)
    assert np.allclose(sbm_density(p, y), stats.norm.pdf(y, 0.5, math.sqrt(2)), atol=1e-15)
    assert np.allclose(sbm_cdf(p, y), stats.norm.cdf(y, 0.5, math.sqrt(2)), atol=1e-15)


def test_fully_skewed_has_no_negative_mass():
    p = SbmParams(1.0, 1.0, 0.0)
    assert np.all(sbm_density(p, np.linspace(-5, -0.01, 50)) == 0)
    assert sbm_cdf(p, 0.0) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("gamma, t, x", TRIPLES)
def test_density_normalised(gamma, t, x):
    p = SbmParams(gamma, t, x)
    assert abs(quad_density(p, -np.inf, np.inf) - 1) < 1e-6


@pytest.mark.parametrize("gamma, t, x", TRIPLES)
def test_cdf_matches_quadrature(gamma, t, x):
    p = SbmParams(gamma, t, x)
    for y in (-2.5, -0.3, 0.0, 0.4, 1.7):
        assert abs(sbm_cdf(p, y) - quad_density(p, -np.inf, y)) < 1e-8


@pytest.mark.parametrize("gamma, t, x", TRIPLES)
def test_chapman_kolmogorov(gamma, t, x):
    s = t / 2
    for y in (-1.0, 0.3, 1.5):
        def integrand(z):
            return sbm_density(SbmParams(gamma, s, x), z) * sbm_density(SbmParams(gamma, t, z), y)
        lhs = sum(integrate.quad(integrand, a, b, epsabs=1e-12, limit=200)[0]
                  for a, b in ((-np.inf, 0.0), (0.0, np.inf)))
        assert abs(lhs - sbm_density(SbmParams(gamma, s + t, x), y)) < 1e-4


def test_density_nonnegative_on_grid():
    for gamma in np.linspace(-1, 1, 9):
        for t in (0.1, 1.0, 4.0):
            for x in (-2.0, 0.0, 1.0):
                assert np.all(sbm_density(SbmParams(gamma, t, x), np.linspace(-6, 6, 121)) >= 0)


@pytest.mark.parametrize("gamma", [-0.6, 0.0, 0.4, 1.0])
def test_cdf_limits_and_positive_mass(gamma):
    p = SbmParams(gamma, 1.3)
    assert sbm_cdf(p, -40.0) == pytest.approx(0.0, abs=1e-15)
    assert sbm_cdf(p, 40.0) == pytest.approx(1.0, abs=1e-15)
    assert 1 - sbm_cdf(p, 0.0) == pytest.approx((1 + gamma) / 2, abs=1e-14)
    y = np.linspace(-5, 5, 401)
    assert np.all(np.diff(sbm_cdf(p, y)) >= -1e-15)


def test_invalid_params():
    with pytest.raises(ValueError):
        SbmParams(1.5, 1.0)
    with pytest.raises(ValueError):
        SbmParams(0.0, 0.0)
    with pytest.raises(ValueError):
        OscParams(0.0, 1.0, 0.0)


@pytest.mark.parametrize("gamma", [-0.8, 0.0, 0.4, 0.9])
def test_origin_sampler_ks(gamma):
    x = sbm_sample_origin(gamma, 1.0, RngStream(1, int(10 * (gamma + 1))), 10**5)
    D = stats.kstest(x, lambda y: sbm_cdf(SbmParams(gamma, 1.0), y)).statistic
    assert D < ks_critical(0.01) / math.sqrt(10**5)


def test_origin_sampler_examples():
    assert np.all(sbm_sample_origin(1.0, 2.0, RngStream(2), 1000) >= 0)
    x = sbm_sample_origin(0.4, 1.0, RngStream(3), 10**4)
    assert abs(np.mean(x > 0) - 0.7) < 0.015
    x = sbm_sample_origin(0.0, 1.0, RngStream(4), 10**5)
    assert stats.kstest(x, "norm").statistic < 1.63 / math.sqrt(10**5)


def test_general_start_sampler():
    p = SbmParams(-0.5, 0.7, 0.8)
    x = sbm_sample(p, RngStream(5), 3000)
    assert stats.kstest(x, lambda y: sbm_cdf(p, y)).statistic < ks_critical(0.01) / math.sqrt(3000)


def test_walsh_marginal_sampler():
    w = [0.2, 0.3, 0.5]
    ray, rad = wbm_marginal_sample(w, 2.0, RngStream(6), 10**5)
    for k, p in enumerate(w, 1):
        assert abs(np.mean(ray == k) - p) < 4 * math.sqrt(p * (1 - p) / 10**5)
    assert np.all(rad >= 0)
    assert stats.kstest(rad / math.sqrt(2.0), stats.halfnorm.cdf).statistic < ks_critical(0.01) / math.sqrt(10**5)


def test_two_ray_walsh_is_symmetric_skew_marginal():
    ray, rad = wbm_marginal_sample([0.5, 0.5], 1.0, RngStream(7), 10**5)
    signed = np.where(ray == 1, rad, -rad)
    D = stats.kstest(signed, lambda y: sbm_cdf(SbmParams(0.0, 1.0), y)).statistic
    assert D < ks_critical(0.01) / math.sqrt(10**5)


def test_single_ray_is_reflecting():
    ray, rad = wbm_marginal_sample([1.0], 1.0, RngStream(8), 1000)
    assert np.all(ray == 1)


def test_osc_coefficient_examples():
    assert osc_drift_coefficient(OscParams(1.5, 1.5, 0.3)) == pytest.approx(0.3)
    vp, vm = 2.0, 1.0
    assert osc_drift_coefficient(OscParams(vp, vm, (vm - vp) / (vp + vm))) == pytest.approx(0.0, abs=1e-15)
    assert osc_drift_coefficient(OscParams(2.0, 1.0, 0.0)) == pytest.approx(1 / 3)


def test_osc_coefficient_increasing():
    for vp, vm in ((2.0, 1.0), (0.5, 3.0), (1.0, 1.0)):
        vals = [osc_drift_coefficient(OscParams(vp, vm, g)) for g in np.linspace(-0.99, 0.99, 101)]
        assert np.all(np.diff(vals) > 0)


def test_scale_maps():
    assert phi_map(0.0, 2, 3) == 0.0
    assert phi_map(2.0, 2, 3) == 1.0 and phi_map(-3.0, 2, 3) == -1.0
    assert psi_map(1.0, 2, 3) == 2.0 and psi_map(-1.0, 2, 3) == -3.0
    for x in (-3.0, 0.0, 5.0):
        assert psi_map(phi_map(x, 0.7, 1.9), 0.7, 1.9) == pytest.approx(x)
    x = np.random.default_rng(0).normal(0, 10, 1000)
    assert np.allclose(phi_map(psi_map(x, 1.3, 0.4), 1.3, 0.4), x, atol=1e-12, rtol=0)


@given(st.floats(-1e6, 1e6), st.floats(0.01, 100), st.floats(0.01, 100))
def test_phi_properties(x, vp, vm):
    y = phi_map(x, vp, vm)
    assert y * x >= 0
    assert phi_map(x + 1.0, vp, vm) > y
    assert psi_map(y, vp, vm) == pytest.approx(x, rel=1e-12, abs=1e-12)


def test_local_time_oracle():
    assert reflecting_local_time_oracle(1.0) == pytest.approx(math.sqrt(2 / math.pi))
    assert reflecting_local_time_oracle(4.0) == pytest.approx(2 * reflecting_local_time_oracle(1.0))
    assert reflecting_local_time_oracle(0.0) == 0.0
    with pytest.raises(ValueError):
        reflecting_local_time_oracle(-1.0)


def test_density_table(tmp_path):
    p = SbmParams(0.4, 1.0)
    grid = np.linspace(-4, 4, 801)
    table = write_density_csv(p, grid, tmp_path / "d.csv")
    assert np.array_equal(table, density_table(p, grid))
    assert abs(np.trapezoid(table[:, 1], grid) - 1) < 1e-4
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0] == "y,pdf,cdf" and len(lines) == 802
