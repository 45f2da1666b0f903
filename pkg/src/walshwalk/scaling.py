"""Donsker scalings, the local-time estimator and the statistical harness.

Scaled paths are step functions: the value at time ``t`` is the path at
index ``[nt]``.  Ensembles draw path ``k`` from ``RngStream(seed, k)`` and
reduce with compensated sums, so results do not depend on the number of
worker threads.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .distributions import RngStream
from .models import CyclePath

MIN_SAMPLES = 100


def phi_map(x, v_plus: float, v_minus: float):
    """Scale map ``x / v_plus`` for ``x >= 0`` and ``x / v_minus`` for ``x < 0``."""
    x = np.asarray(x, float)
    out = np.where(x >= 0, x / v_plus, x / v_minus)
    return out if out.ndim else float(out)


@dataclass
class ScaledPath:
    """Values at grid times ``k / n``.

    ``values`` has shape ``(K,)`` for membrane walks (after the scale map)
    and ``(K, m)`` for axis and spider chains, where coordinate ``i`` is
    ``R / (v_i sqrt(n))`` while the label is ``i`` and 0 otherwise.
    """

    n: int
    values: np.ndarray
    kind: str

    @property
    def horizon(self) -> float:
        return (len(self.values) - 1) / self.n

    def index(self, t: float) -> int:
        k = int(math.floor(t * self.n + 1e-9))
        if k < 0 or k >= len(self.values):
            raise ValueError(f"time {t} outside the scaled horizon {self.horizon}")
        return k

    def at(self, t: float):
        return self.values[self.index(t)]

    def occupation(self, t: float) -> np.ndarray:
        """Time spent up to ``t`` with each coordinate strictly positive."""
        k = self.index(t)
        v = self.values[:k]
        if v.ndim == 1:
            return np.array([np.count_nonzero(v > 0) / self.n])
        return np.count_nonzero(v > 0, axis=0) / self.n


def donsker_scale(path: CyclePath, n: int, v, horizon: float | None = None) -> ScaledPath:
    """Scale a path in space by ``sqrt(n)`` and in time by ``n``.

    ``v`` holds the ray scales (axis, spider) or ``(v_plus, v_minus)``
    (membrane).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    last = path.length if horizon is None else int(math.floor(n * horizon + 1e-9))
    if last > path.length:
        raise ValueError(f"horizon {horizon} needs {last} steps, path has {path.length}")
    root = math.sqrt(n)
    R = path.radius[: last + 1].astype(float)
    if path.kind == "membrane":
        vp, vm = v
        return ScaledPath(n, phi_map(R / root, vp, vm), "membrane")
    v = np.asarray(v, float)
    L = path.label[: last + 1].astype(np.int64)
    out = np.zeros((last + 1, len(v)))
    on = L >= 1
    rows = np.flatnonzero(on)
    out[rows, L[on] - 1] = R[on] / (v[L[on] - 1] * root)
    return ScaledPath(n, out, path.kind)


@dataclass
class LocalTime:
    """Step function ``t -> L^n(t)`` built from completed excursions.

    ``times`` are entrance indices and ``increments`` the scaled excursion
    gains ``(R(tau_k) - R(sigma_{k+1})) / (v sqrt(n))``.  ``normal`` and
    ``critical`` count the steps taken from positive and non-positive radii.
    """

    n: int
    times: np.ndarray
    increments: np.ndarray
    normal: np.ndarray
    critical: np.ndarray

    def __call__(self, t):
        k = np.floor(np.asarray(t, float) * self.n + 1e-9).astype(np.int64)
        cum = np.concatenate([[0.0], np.cumsum(self.increments)])
        out = cum[np.searchsorted(self.times, k, side="right")]
        return out if out.ndim else float(out)


def local_time_estimator(path: CyclePath, n: int, v) -> LocalTime:
    """Scaled sum of excursion gains over entrances up to ``[nt]``.

    An entrance contributes only once the exit that ends its excursion is
    observed within the path.
    """
    v = np.asarray(v, float)
    R = path.radius.astype(np.int64)
    if path.kind == "axis":
        tau = path.tau
        sig = path.sigma
        # entrance tau[j] is closed by sigma[j + 1]
        k = min(len(tau), max(0, len(sig) - 1))
        t_idx = tau[:k]
        ends = R[sig[1: k + 1]]
    elif path.kind == "spider":
        t_idx = path.tau
        pos = np.searchsorted(path.sigma, t_idx, side="left")
        done = pos < len(path.sigma)
        t_idx = t_idx[done]
        ends = path.overshoot[pos[done]]
    else:
        raise ValueError("local time is defined for axis and spider paths")
    labels = path.label[t_idx].astype(np.int64)
    inc = (R[t_idx] - ends) / (v[labels - 1] * math.sqrt(n))
    pos_steps = np.concatenate([[0], np.cumsum(R[:-1] > 0)])
    crit = np.arange(len(R)) - pos_steps
    return LocalTime(n, t_idx.astype(np.int64), inc.astype(float), pos_steps, crit)


# ---------------------------------------------------------------------------
# statistics


def mean_stderr(x) -> tuple[float, float]:
    """Mean and standard error with compensated summation."""
    x = np.asarray(x, float).ravel()
    n = len(x)
    if n < 2:
        raise ValueError("need at least two samples")
    mean = math.fsum(x) / n
    var = math.fsum((x - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)


@dataclass
class Share:
    value: float
    stderr: float
    count: int


def occupation_fractions(values, m: int | None = None) -> dict:
    """Share of non-zero values per sign (membrane) or per ray (axis/spider), with binomial errors.

    ``values`` is either a 1-d array of scalar positions or an ``(N, m)``
    array of ray coordinates.  Values exactly at 0 are excluded.
    """
    v = np.asarray(values, float)
    if v.ndim == 1:
        nz = v[v != 0]
        N = len(nz)
        if N < MIN_SAMPLES:
            raise ValueError(f"need at least {MIN_SAMPLES} non-zero values, got {N}")
        p = np.count_nonzero(nz > 0) / N
        se = math.sqrt(p * (1 - p) / N)
        return {"+": Share(p, se, N), "-": Share(1 - p, se, N)}
    active = v != 0
    keep = active.any(axis=1)
    N = int(keep.sum())
    if N < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} non-zero values, got {N}")
    out = {}
    for i in range(v.shape[1]):
        p = np.count_nonzero(active[keep, i]) / N
        out[i + 1] = Share(p, math.sqrt(p * (1 - p) / N), N)
    return out


def ks_critical(alpha: float) -> float:
    """Asymptotic Kolmogorov constant ``c(alpha)`` with ``P(sqrt(N) D > c) ~ alpha``."""
    return math.sqrt(-0.5 * math.log(alpha / 2))


@dataclass
class KSResult:
    statistic: float
    threshold: float
    passed: bool
    N: int


def ks_test(samples, cdf: Callable, alpha: float = 0.01) -> KSResult:
    """One-sample Kolmogorov-Smirnov test; passes iff ``D < c(alpha)/sqrt(N)``."""
    x = np.asarray(samples, float).ravel()
    N = len(x)
    if N < MIN_SAMPLES:
        raise ValueError(f"KS test needs at least {MIN_SAMPLES} samples, got {N}")
    D = float(stats.kstest(x, cdf).statistic)
    thr = ks_critical(alpha) / math.sqrt(N)
    return KSResult(D, thr, D < thr, N)


def lattice_jitter(values, span: float, r: RngStream) -> np.ndarray:
    """Spread lattice values uniformly over their cell of width ``span``."""
    v = np.asarray(values, float)
    return v + (r.gen.random(v.shape) - 0.5) * span


# ---------------------------------------------------------------------------
# martingale characterisation


@dataclass
class MartingaleFeatures:
    """Per-path values needed by :func:`martingale_residual_check`.

    ``x[s]`` is the ``(N, m)`` array of ray coordinates at time ``s``,
    ``nu[s]`` the local-time estimate at ``s`` and ``occ`` the ``(N, m)``
    occupation times of the positive part of each ray up to ``t_qv``.
    """

    x: dict
    nu: dict
    occ: np.ndarray
    t_qv: float


def martingale_features(scaled: Sequence[ScaledPath], local_times: Sequence[LocalTime],
                        times: Sequence[float], t_qv: float = 1.0) -> MartingaleFeatures:
    times = sorted(set(times) | {t_qv})
    x = {t: np.array([s.at(t) for s in scaled]) for t in times}
    nu = {t: np.array([lt(t) for lt in local_times]) for t in times}
    occ = np.array([s.occupation(t_qv) for s in scaled])
    return MartingaleFeatures(x, nu, occ, t_qv)


def stack_features(parts: Sequence[MartingaleFeatures]) -> MartingaleFeatures:
    first = parts[0]
    x = {t: np.concatenate([p.x[t] for p in parts]) for t in first.x}
    nu = {t: np.concatenate([p.nu[t] for p in parts]) for t in first.nu}
    return MartingaleFeatures(x, nu, np.concatenate([p.occ for p in parts]), first.t_qv)


@dataclass
class Residual:
    name: str
    value: float
    stderr: float
    passed: bool


@dataclass
class ResidualReport:
    residuals: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.residuals)

    def failures(self) -> list:
        return [r for r in self.residuals if not r.passed]


def martingale_residual_check(f: MartingaleFeatures, weights, pairs=((0.0, 1.0), (0.5, 1.0)),
                              k: float = 3.0) -> ResidualReport:
    """Test ``M_i = X_i - p_i nu`` for martingale increments and its bracket.

    For each ``(s, t)`` and ray ``i`` the mean of ``(M_i(t) - M_i(s)) g``
    with ``g`` in ``{1, X_i(s), nu(s)}`` must lie within ``k`` standard
    errors of 0 (``g`` other than 1 is skipped at ``s = 0`` where it
    vanishes); so must the mean of ``M_i(t_qv)^2`` minus the occupation time
    of ``{X_i > 0}``.
    """
    w = np.asarray(weights, float)
    rep = ResidualReport()

    def add(name, samples):
        mean, se = mean_stderr(samples)
        rep.residuals.append(Residual(name, mean, se, abs(mean) <= k * se + 1e-15))

    for s, t in pairs:
        for i in range(len(w)):
            Ms = f.x[s][:, i] - w[i] * f.nu[s]
            Mt = f.x[t][:, i] - w[i] * f.nu[t]
            dM = Mt - Ms
            add(f"drift ray {i + 1} ({s},{t}) g=1", dM)
            if s > 0:
                add(f"drift ray {i + 1} ({s},{t}) g=X(s)", dM * f.x[s][:, i])
                add(f"drift ray {i + 1} ({s},{t}) g=nu(s)", dM * f.nu[s])
    t = f.t_qv
    for i in range(len(w)):
        M = f.x[t][:, i] - w[i] * f.nu[t]
        add(f"bracket ray {i + 1} t={t}", M ** 2 - f.occ[:, i])
    return rep


# ---------------------------------------------------------------------------
# ensembles and reports


def run_ensemble(fn: Callable[[RngStream, int], object], n_paths: int, seed: int,
                 threads: int = 1) -> list:
    """Evaluate ``fn(RngStream(seed, k), k)`` for ``k < n_paths`` in path order."""
    def one(k):
        return fn(RngStream(seed, k), k)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(one, range(n_paths), chunksize=64))
    return [one(k) for k in range(n_paths)]


@dataclass
class EnsembleStats:
    """Named statistics of an ensemble of ``N`` paths with standard errors."""

    N: int
    stats: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.N < MIN_SAMPLES:
            raise ValueError(f"ensembles need at least {MIN_SAMPLES} paths, got {self.N}")

    def add(self, name: str, value: float, stderr: float) -> None:
        self.stats[name] = (float(value), float(stderr))


@dataclass
class TestOutcome:
    name: str
    statistic: float
    threshold: float
    passed: bool
    N: int
    n: int
    seed: int

    __test__ = False


@dataclass
class VerificationReport:
    outcomes: list = field(default_factory=list)

    __test__ = False

    @property
    def passed(self) -> bool:
        return all(o.passed for o in self.outcomes)

    def add(self, name, statistic, threshold, passed, N=0, n=0, seed=0) -> TestOutcome:
        o = TestOutcome(name, float(statistic), float(threshold), bool(passed), int(N), int(n), int(seed))
        self.outcomes.append(o)
        return o

    def to_json(self) -> dict:
        return {"passed": self.passed,
                "tests": {o.name: {k: v for k, v in asdict(o).items() if k != "name"} for o in self.outcomes}}

    def write(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)
