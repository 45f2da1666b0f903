"""Verification suite for a single chain spec.

Exact limit parameters are compared with the Monte Carlo embedded-chain
route and with ensembles of Donsker-scaled paths: occupation of each ray or
side, the radial or signed marginal against its exact law, and (for axis and
spider chains) the martingale residuals built from the local-time estimator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce

import numpy as np
from scipy.special import ndtr

from .distributions import RngStream
from .embedded import (
    compute_gamma_membrane,
    compute_mu,
    compute_weights,
    compute_weights_spider,
    harvest_cycles,
)
from .models import (
    AxisChainSpec,
    ChainSpec,
    MembraneWalkSpec,
    SpiderWalkSpec,
    simulate,
)
from .reference import OscParams, SbmParams, osc_drift_coefficient, sbm_cdf
from .scaling import (
    VerificationReport,
    donsker_scale,
    ks_test,
    lattice_jitter,
    local_time_estimator,
    martingale_features,
    martingale_residual_check,
    mean_stderr,
    occupation_fractions,
    phi_map,
    run_ensemble,
    stack_features,
)

SIGMA_BAND = 3.0
DRIFT_TOL = 0.02


@dataclass
class VerifyConfig:
    """Sizes of one verification run."""

    mode: str = "exact"
    n: int = 10**4
    paths: int = 10**4
    horizon: float = 1.0
    seed: int = 0
    threads: int = 1
    alpha: float = 0.01
    cycles: int = 10**5
    radius_cutoff: int = 512

    def __post_init__(self):
        if self.mode not in ("exact", "mc"):
            raise ValueError(f"mode must be 'exact' or 'mc', got {self.mode!r}")
        if self.n < 1 or self.paths < 1:
            raise ValueError("n and paths must be >= 1")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")

    @property
    def steps(self) -> int:
        return int(math.floor(self.n * self.horizon + 1e-9))


def lattice_period(xi) -> int:
    """Gcd of the differences between atoms of a jump law."""
    s = xi.support
    return reduce(math.gcd, (abs(a - s[0]) for a in s[1:]), 0) or 1


def half_normal_cdf(t: float):
    return lambda y: np.where(np.asarray(y) > 0, 2 * ndtr(np.asarray(y, float) / math.sqrt(t)) - 1, 0.0)


def limit_parameters(spec: ChainSpec, cfg: VerifyConfig) -> dict:
    """Exact (or Monte Carlo) limit parameters as plain JSON values."""
    r = RngStream(cfg.seed, 0)
    kw = dict(radius_cutoff=cfg.radius_cutoff) if cfg.mode == "exact" else dict(cycles=cfg.cycles, r=r)
    if isinstance(spec, MembraneWalkSpec):
        g = compute_gamma_membrane(spec, cfg.mode, **kw)
        vp, vm = spec.v
        out = {"kind": "membrane", "gamma": g.gamma, "forms": g.forms, "stderr": g.stderr,
               "v_plus": vp, "v_minus": vm, "degenerate": g.degenerate,
               "truncation_loss": g.truncation_loss}
        if abs(g.gamma) < 1:
            out["drift_coefficient"] = osc_drift_coefficient(OscParams(vp, vm, g.gamma))
        return out
    if isinstance(spec, SpiderWalkSpec):
        w = compute_weights_spider(spec, cfg.mode, **kw)
        mu = None
    else:
        source = spec if cfg.mode == "exact" else harvest_cycles(spec, cfg.cycles, r)
        w = compute_weights(source, cfg.radius_cutoff)
        mu = compute_mu(source, cfg.radius_cutoff)
    out = {"kind": "spider" if isinstance(spec, SpiderWalkSpec) else "axis",
           "weights": w.weights.tolist(), "forms": {k: np.asarray(v).tolist() for k, v in w.forms.items()},
           "stderr": {k: np.asarray(v).tolist() for k, v in w.stderr.items()},
           "truncation_loss": w.truncation_loss, "v": np.asarray(spec.v).tolist()}
    if mu is not None:
        out["mu"] = mu.mu
    return out


def _start(spec: ChainSpec):
    if isinstance(spec, MembraneWalkSpec):
        return 0
    if isinstance(spec, SpiderWalkSpec):
        return (0, 0)
    return (0, 1)


def scaled_ensemble(spec: ChainSpec, cfg: VerifyConfig, features: bool = False):
    """Endpoint values of ``cfg.paths`` scaled paths, plus martingale features if asked."""
    steps = cfg.steps
    T = steps / cfg.n
    init = _start(spec)
    kind_membrane = isinstance(spec, MembraneWalkSpec)
    times = (0.0, T / 2, T)

    def one(r, k):
        path = simulate(spec, steps, init, r)
        if kind_membrane:
            return float(path.radius[steps]) / math.sqrt(cfg.n)
        sp = donsker_scale(path, cfg.n, spec.v)
        end = sp.values[-1]
        if not features:
            return end, None
        lt = local_time_estimator(path, cfg.n, spec.v)
        return end, martingale_features([sp], [lt], times, T)

    out = run_ensemble(one, cfg.paths, cfg.seed + 1, cfg.threads)
    if kind_membrane:
        return np.array(out), None
    ends = np.array([o[0] for o in out])
    feats = stack_features([o[1] for o in out]) if features else None
    return ends, feats


def verify_spec(spec: ChainSpec, cfg: VerifyConfig, reference: dict | None = None) -> tuple[VerificationReport, dict]:
    """Run the suite; ``reference`` overrides the exact gamma or weights used as the target."""
    rep = VerificationReport()
    params = limit_parameters(spec, cfg)
    reference = reference or {}
    N, n, seed = cfg.paths, cfg.n, cfg.seed
    T = cfg.steps / cfg.n
    jitter_r = RngStream(cfg.seed, 2**20)
    data = {"params": params}

    forms = params["forms"]
    stderr = params["stderr"]
    names = list(forms)
    worst = 0.0
    for a in names:
        for b in names[names.index(a) + 1:]:
            gap = np.max(np.abs(np.subtract(forms[a], forms[b])))
            band = (1e-9 if cfg.mode == "exact" else
                    SIGMA_BAND * float(np.max(np.hypot(stderr[a], stderr[b]))) + 1e-12)
            worst = max(worst, gap / band)
    rep.add("form_agreement", worst, 1.0, worst <= 1.0, 0, 0, seed)

    if isinstance(spec, MembraneWalkSpec):
        gamma = float(reference.get("gamma", params["gamma"]))
        vp, vm = spec.v
        x = scaled_ensemble(spec, cfg)[0]
        data["marginal"] = x
        occ = occupation_fractions(x)["+"]
        target = (1 + gamma) / 2
        z = abs(occ.value - target) / max(occ.stderr, 1e-12)
        rep.add("occupation_positive", occ.value, target, z <= SIGMA_BAND, occ.count, n, seed)
        span = min(lattice_period(spec.xi_plus), lattice_period(spec.xi_minus)) / math.sqrt(n)
        y = phi_map(lattice_jitter(x, span, jitter_r), vp, vm)
        ks = ks_test(y, lambda q: sbm_cdf(SbmParams(gamma, T), q), cfg.alpha)
        rep.add("ks_signed_marginal", ks.statistic, ks.threshold, ks.passed, ks.N, n, seed)
        if "drift_coefficient" in params and abs(params["drift_coefficient"]) <= DRIFT_TOL:
            mean, se = mean_stderr(x)
            rep.add("martingale_mean", mean, SIGMA_BAND * se, abs(mean) <= SIGMA_BAND * se, N, n, seed)
        return rep, data

    weights = np.asarray(reference.get("weights", params["weights"]), float)
    ends, feats = scaled_ensemble(spec, cfg, features=True)
    data["marginal"] = ends
    fr = occupation_fractions(ends)
    for i, w in enumerate(weights, 1):
        occ = fr[i]
        z = abs(occ.value - w) / max(occ.stderr, 1e-12)
        rep.add(f"occupation_ray_{i}", occ.value, w, z <= SIGMA_BAND, occ.count, n, seed)
    radial = ends.sum(axis=1)
    radial = radial[radial != 0]
    cell = min(lattice_period(xi) / v for xi, v in zip(spec.jumps, spec.v)) / math.sqrt(n)
    ks = ks_test(np.abs(lattice_jitter(radial, cell, jitter_r)), half_normal_cdf(T), cfg.alpha)
    rep.add("ks_radial_marginal", ks.statistic, ks.threshold, ks.passed, ks.N, n, seed)
    res = martingale_residual_check(feats, weights, pairs=((0.0, T), (T / 2, T)))
    for r_ in res.residuals:
        rep.add(f"residual {r_.name}", r_.value, SIGMA_BAND * r_.stderr, r_.passed, N, n, seed)
    return rep, data


__all__ = ["VerifyConfig", "limit_parameters", "scaled_ensemble", "verify_spec",
           "lattice_period", "half_normal_cdf"]
