"""Exact marginals and coefficients of the limit diffusions.

Conventions: inside the skew density ``sgn(0) = 0``; the scale maps
``phi_map`` (in :mod:`walshwalk.scaling`) and :func:`psi_map` put 0 on the
positive side.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr

from .distributions import RngStream

SQRT_2PI = math.sqrt(2 * math.pi)


@dataclass(frozen=True)
class SbmParams:
    """Skew Brownian motion at time ``t`` started from ``x``."""

    gamma: float
    t: float
    x: float = 0.0

    def __post_init__(self):
        if not abs(self.gamma) <= 1:
            raise ValueError(f"|gamma| must be <= 1, got {self.gamma}")
        if not self.t > 0:
            raise ValueError(f"t must be positive, got {self.t}")


@dataclass(frozen=True)
class OscParams:
    """Oscillating skew Brownian motion with scales ``v_plus``, ``v_minus``."""

    v_plus: float
    v_minus: float
    gamma: float

    def __post_init__(self):
        if not (self.v_plus > 0 and self.v_minus > 0):
            raise ValueError("scales must be positive")
        if not abs(self.gamma) < 1:
            raise ValueError("|gamma| must be < 1")


def _heat(t, z):
    return np.exp(-np.square(z) / (2 * t)) / (SQRT_2PI * math.sqrt(t))


def sbm_density(p: SbmParams, y):
    """Transition density ``g_t(x - y) + gamma sgn(y) g_t(|x| + |y|)`` with Gaussian kernel ``g_t``."""
    y = np.asarray(y, float)
    out = _heat(p.t, p.x - y) + p.gamma * np.sign(y) * _heat(p.t, abs(p.x) + np.abs(y))
    return out if out.ndim else float(out)


def sbm_cdf(p: SbmParams, y):
    """Closed-form distribution function of the skew density."""
    y = np.asarray(y, float)
    s = math.sqrt(p.t)
    ax = abs(p.x)
    g = p.gamma
    base = ndtr((y - p.x) / s)
    neg = base - g * ndtr((y - ax) / s)
    pos = base - g * ndtr(-ax / s) + g * (ndtr((np.abs(y) + ax) / s) - ndtr(ax / s))
    out = np.where(y <= 0, neg, pos)
    return out if out.ndim else float(out)


def sbm_sample_origin(gamma: float, t: float, r: RngStream, size: int | None = None):
    """Exact draws at time ``t`` from 0: ``|N(0, t)|`` signed + with probability ``(1 + gamma)/2``."""
    SbmParams(gamma, t)
    g = r.gen
    mag = np.abs(g.standard_normal(size)) * math.sqrt(t)
    sign = np.where(g.random(size) < (1 + gamma) / 2, 1.0, -1.0)
    out = sign * mag
    return float(out) if size is None else out


def sbm_sample(p: SbmParams, r: RngStream, size: int = 1, tol: float = 1e-12) -> np.ndarray:
    """Draws from a general start by bisection inversion of :func:`sbm_cdf`."""
    u = r.gen.random(size)
    span = p.x + np.array([-1, 1]) * 40 * math.sqrt(p.t)
    return np.array([brentq(lambda y, q=q: sbm_cdf(p, y) - q, span[0], span[1], xtol=tol)
                     for q in u])


def wbm_marginal_sample(weights, t: float, r: RngStream, size: int | None = None):
    """Walsh Brownian motion from the origin at time ``t``: ``(ray, radius)`` with ray ``k`` (1-based) w.p. ``p_k``."""
    w = np.asarray(weights, float)
    if np.any(w < 0) or abs(w.sum() - 1) > 1e-9:
        raise ValueError("weights must be a probability vector")
    g = r.gen
    ray = np.searchsorted(np.cumsum(w), g.random(size) * w.sum(), side="right") + 1
    ray = np.minimum(ray, len(w))
    rad = np.abs(g.standard_normal(size)) * math.sqrt(t)
    if size is None:
        return int(ray), float(rad)
    return ray, rad


def osc_drift_coefficient(o: OscParams) -> float:
    """Local-time coefficient ``(g(v+ + v-) + v+ - v-) / (g(v+ - v-) + v+ + v-)`` of the oscillating SDE."""
    vp, vm, g = o.v_plus, o.v_minus, o.gamma
    return (g * (vp + vm) + vp - vm) / (g * (vp - vm) + vp + vm)


def psi_map(x, v_plus: float, v_minus: float):
    """Inverse of the scale map: ``x v_plus`` for ``x >= 0`` and ``x v_minus`` for ``x < 0``."""
    x = np.asarray(x, float)
    out = np.where(x >= 0, x * v_plus, x * v_minus)
    return out if out.ndim else float(out)


def reflecting_local_time_oracle(t: float) -> float:
    """Mean local time at 0 of reflected Brownian motion up to ``t``, ``sqrt(2t/pi)``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    return math.sqrt(2 * t / math.pi)


def density_table(p: SbmParams, grid) -> np.ndarray:
    """Rows ``(y, pdf, cdf)`` on ``grid``."""
    y = np.asarray(grid, float)
    return np.column_stack([y, sbm_density(p, y), sbm_cdf(p, y)])


def write_density_csv(p: SbmParams, grid, path: str | Path) -> np.ndarray:
    table = density_table(p, grid)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["y", "pdf", "cdf"])
        for row in table:
            w.writerow([repr(float(v)) for v in row])
    return table
