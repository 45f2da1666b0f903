"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import math

import numpy as np
import pytest

from walshwalk.catalog import (
    harrison_shepp,
    matrix_perturbed_axis,
    ngo_peigne_example,
    oscillating_martingale_membrane,
    random_specs,
    symmetric_spider,
    two_point_membrane,
)
from walshwalk.distributions import RngStream
from walshwalk.embedded import (
    compute_gamma_membrane,
    compute_mu,
    compute_weights,
    compute_weights_spider,
    first_passage_overshoot,
    harvest_cycles,
)
from walshwalk.models import MembraneWalkSpec, SpiderWalkSpec, simulate, spider_to_axis, unfold_membrane
from walshwalk.reference import (
    OscParams,
    SbmParams,
    osc_drift_coefficient,
    reflecting_local_time_oracle,
    sbm_cdf,
    sbm_density,
    sbm_sample_origin,
)
from walshwalk.scaling import ks_test, local_time_estimator, mean_stderr, run_ensemble
from walshwalk.verification import VerifyConfig, verify_spec

N_SCALE = 10**4
N_PATHS = 10**4
ROWS = [0.2, 0.3, 0.5]

pytestmark = pytest.mark.slow


@pytest.fixture
def verdict(capsys):
    def emit(k, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail
    return emit


def run_verify(spec, seed, reference=None):
    cfg = VerifyConfig(n=N_SCALE, paths=N_PATHS, seed=seed)
    rep, data = verify_spec(spec, cfg, reference)
    return {o.name: o for o in rep.outcomes}, data


def test_criterion_01_harrison_shepp(verdict):
    spec = harrison_shepp("7/10")
    g = compute_gamma_membrane(spec)
    tests, _ = run_verify(spec, 101)
    occ = tests["occupation_positive"].statistic
    ks = tests["ks_signed_marginal"]
    ok = abs(g.gamma - 0.4) <= 1e-12 and abs(occ - 0.7) <= 0.02 and ks.passed
    verdict(1, ok, f"gamma={g.gamma:.12f} occupation={occ:.4f} KS D={ks.statistic:.4g} < {ks.threshold:.4g}")


def test_criterion_02_two_point_membrane(verdict):
    spec = two_point_membrane("0.6", "0.2", d=1)
    g = compute_gamma_membrane(spec)
    tests, _ = run_verify(spec, 102)
    occ = tests["occupation_positive"].statistic
    ok = abs(g.gamma - 0.5) <= 1e-9 and abs(occ - 0.75) <= 0.02
    verdict(2, ok, f"gamma={g.gamma:.12f} occupation={occ:.4f}")


def test_criterion_03_identical_rows(verdict):
    spec = matrix_perturbed_axis([ROWS] * 3)
    exact = compute_weights(spec)
    mc = compute_weights(harvest_cycles(spec, 10**5, RngStream(103)))
    gap_exact = np.max(np.abs(exact.weights - ROWS))
    gap_mc = np.max(np.abs(mc.weights - ROWS))
    ok = gap_exact <= 1e-9 and gap_mc <= 0.01
    verdict(3, ok, f"exact gap={gap_exact:.2e} mc={np.round(mc.weights, 4).tolist()} gap={gap_mc:.4f}")


def test_criterion_04_symmetric_spider(verdict):
    spec = symmetric_spider(3)
    exact = compute_weights_spider(spec)
    mc = compute_weights_spider(spec, "mc", cycles=10**5, r=RngStream(104))
    tests, _ = run_verify(spec, 104)
    occ = np.array([tests[f"occupation_ray_{i}"].statistic for i in (1, 2, 3)])
    gaps = (np.max(np.abs(exact.weights - 1 / 3)), np.max(np.abs(mc.weights - 1 / 3)), np.max(np.abs(occ - 1 / 3)))
    ok = gaps[0] <= 1e-9 and gaps[1] <= 0.01 and gaps[2] <= 0.02
    verdict(4, ok, f"exact gap={gaps[0]:.2e} mc gap={gaps[1]:.4f} occupation={np.round(occ, 4).tolist()}")


def _exact_and_mc(spec, k):
    """Largest exact gap between forms, and largest MC gap in units of combined stderr."""
    r = RngStream(105, k)
    if isinstance(spec, MembraneWalkSpec):
        ex = compute_gamma_membrane(spec, check=False)
        ex_forms = [{key: np.atleast_1d(v) for key, v in ex.forms.items()}]
        axis = unfold_membrane(spec)
        cb = harvest_cycles(spec, 10**5, r)
        mc = compute_gamma_membrane(spec, "mc", r=r, batches_data=cb, check=False)
        mc_sets = [({key: np.atleast_1d(v) for key, v in mc.forms.items()},
                    {key: np.atleast_1d(v) for key, v in mc.stderr.items()})]
    else:
        axis = spider_to_axis(spec) if isinstance(spec, SpiderWalkSpec) else spec
        ex_forms = [compute_weights(axis, check=False).forms]
        cb = harvest_cycles(spec, 10**5, r)
        mc = compute_weights(cb, check=False)
        mc_sets = [(mc.forms, mc.stderr)]
    ex_forms.append({key: np.atleast_1d(v) for key, v in compute_mu(axis, check=False).forms.items()})
    mu_mc = compute_mu(cb, check=False)
    mc_sets.append(({key: np.atleast_1d(v) for key, v in mu_mc.forms.items()},
                    {key: np.atleast_1d(v) for key, v in mu_mc.stderr.items()}))
    exact_gap = 0.0
    for forms in ex_forms:
        ref = next(iter(forms.values()))
        exact_gap = max(exact_gap, max(float(np.max(np.abs(f - ref))) for f in forms.values()))
    z = 0.0
    for forms, se in mc_sets:
        names = list(forms)
        for a in names:
            for b in names[names.index(a) + 1:]:
                band = np.hypot(se[a], se[b]) + 1e-15
                z = max(z, float(np.max(np.abs(forms[a] - forms[b]) / band)))
    return exact_gap, z


def test_criterion_05_formula_equivalence(verdict):
    specs = random_specs(2024, 20)
    results = [_exact_and_mc(spec, k) for k, spec in enumerate(specs)]
    worst_exact = max(r[0] for r in results)
    worst_z = max(r[1] for r in results)
    kinds = {type(s).__name__ for s in specs}
    ok = worst_exact <= 1e-9 and worst_z <= 3.0
    verdict(5, ok, f"{len(specs)} specs {sorted(kinds)}: worst exact gap={worst_exact:.2e} "
                   f"worst MC gap={worst_z:.2f} stderr")


def test_criterion_06_oscillating_martingale(verdict):
    spec = oscillating_martingale_membrane()
    assert spec.v == pytest.approx((2.0, 1.0))
    g = compute_gamma_membrane(spec)
    drift = osc_drift_coefficient(OscParams(2.0, 1.0, g.gamma))
    tests, data = run_verify(spec, 106)
    mean, se = mean_stderr(data["marginal"])
    ok = abs(drift) <= 0.02 and abs(mean) <= 3 * se and tests["martingale_mean"].passed
    verdict(6, ok, f"gamma={g.gamma:.6f} drift={drift:.2e} mean X(n)/sqrt(n)={mean:.4f} +- {se:.4f}")


def test_criterion_07_skew_density(verdict):
    from scipy import integrate

    rng = np.random.default_rng(107)
    worst_norm = worst_ck = 0.0
    for _ in range(3):
        gamma, x = rng.uniform(-1, 1), rng.uniform(-2, 2)
        s, t = rng.uniform(0.2, 2, size=2)
        total = sum(integrate.quad(lambda y: sbm_density(SbmParams(gamma, t, x), y), a, b,
                                   epsabs=1e-12, limit=200)[0] for a, b in ((-np.inf, 0), (0, np.inf)))
        worst_norm = max(worst_norm, abs(total - 1))
        for y in (-1.0, 0.5):
            lhs = sum(integrate.quad(lambda z: sbm_density(SbmParams(gamma, s, x), z)
                                     * sbm_density(SbmParams(gamma, t, z), y), a, b, epsabs=1e-12, limit=200)[0]
                      for a, b in ((-np.inf, 0), (0, np.inf)))
            worst_ck = max(worst_ck, abs(lhs - sbm_density(SbmParams(gamma, s + t, x), y)))
    ks = ks_test(sbm_sample_origin(0.4, 1.0, RngStream(107), 10**5),
                 lambda y: sbm_cdf(SbmParams(0.4, 1.0), y))
    ok = worst_norm <= 1e-6 and worst_ck <= 1e-4 and ks.passed
    verdict(7, ok, f"normalisation={worst_norm:.1e} Chapman-Kolmogorov={worst_ck:.1e} "
                   f"KS D={ks.statistic:.4g} < {ks.threshold:.4g}")


def test_criterion_08_local_time(verdict):
    spec = unfold_membrane(harrison_shepp("1/2"))

    def one(r, k):
        path = simulate(spec, N_SCALE, (0, 1), r)
        return local_time_estimator(path, N_SCALE, spec.v)(1.0)

    mean, se = mean_stderr(run_ensemble(one, N_PATHS, 108))
    target = reflecting_local_time_oracle(1.0)
    ok = abs(mean - target) <= 0.03
    verdict(8, ok, f"mean L(1)={mean:.4f} +- {se:.4f} target={target:.4f}")


def test_criterion_09_martingale_residuals(verdict):
    spec = matrix_perturbed_axis([ROWS] * 3)
    tests, _ = run_verify(spec, 109)
    residuals = {k: o for k, o in tests.items() if k.startswith("residual")}
    control, _ = run_verify(spec, 109, {"weights": [ROWS[0] + 0.2, ROWS[1], ROWS[2] - 0.2]})
    control_fail = [k for k, o in control.items() if k.startswith("residual drift") and not o.passed]
    ok = all(o.passed for o in residuals.values()) and bool(control_fail)
    worst = max(abs(o.statistic) / o.threshold * 3 for o in residuals.values())
    verdict(9, ok, f"{len(residuals)} residuals pass (worst {worst:.2f} stderr); "
                   f"control fails {len(control_fail)} drift residuals")


def test_criterion_10_two_ray_reduction(verdict):
    spec = ngo_peigne_example()
    xi_plus, xi_minus_neg = spec.jumps
    eta = {-2: 0.3, -1: 0.2, 1: 0.25, 3: 0.25}
    top = max(abs(y) for y in eta)
    plus_table = first_passage_overshoot(xi_plus, max(top, 64))
    minus_table = first_passage_overshoot(xi_minus_neg, max(top, 64))
    v_plus, v_minus = spec.v
    plus = sum(p * (y - plus_table.mean(y)) for y, p in eta.items() if y > 0) / v_plus
    minus = sum(p * (-y - minus_table.mean(-y)) for y, p in eta.items() if y < 0) / v_minus
    closed = plus / (plus + minus)
    got = compute_weights_spider(spec).weights[0]
    ok = abs(got - closed) <= 1e-6 and math.isclose(v_plus, math.sqrt(2))
    verdict(10, ok, f"p_plus={got:.10f} expression={closed:.10f} gap={abs(got - closed):.1e}")
