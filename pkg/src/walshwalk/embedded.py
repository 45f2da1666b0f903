"""Entrance/exit embedded chains, their stationary laws and the limit parameters.

Two independent routes are provided for every quantity:

* exact: exit laws of each ray are obtained from a banded linear solve for
  the first-passage overshoot, assembled with the critical kernel into the
  finite entrance and exit chains, whose stationary vectors are solved
  separately;
* Monte Carlo: consecutive excursions are harvested from independent replica
  chains (one per batch), with standard errors by batch means.

Weights, drift rate and permeability are each evaluated through several
algebraically equivalent expressions, and disagreement beyond tolerance
raises :class:`ConsistencyError`.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import solve_banded

from . import _kernels as K
from .distributions import IntDistribution, RngStream
from .models import (
    MINUS,
    PLUS,
    AxisChainSpec,
    ChainSpec,
    CyclePath,
    MembraneWalkSpec,
    SpecError,
    SpiderWalkSpec,
    _jump_tables,
    _key,
    _max_down,
    membrane_exit_distribution,
    membrane_to_axis_state,
    spider_to_axis,
    unfold_membrane,
)

RADIUS_CUTOFF = 512
EXACT_TOL = 1e-9
LOSS_WARN = 1e-6
BURN_IN = 1000
BATCHES = 20
LADDER_LEVEL = 64
STEP_BUDGET = 4 * 10**9


class ConsistencyError(RuntimeError):
    """Equivalent expressions of a limit parameter disagree."""


class BudgetError(RuntimeError):
    """Too few excursions completed within the step budget."""


class EmbeddingError(RuntimeError):
    """The embedded chain has no unique stationary law."""


# ---------------------------------------------------------------------------
# first passage below zero


@dataclass(frozen=True)
class OvershootTable:
    """Exit laws ``P(R(sigma) = u | R(0) = y)`` of a ray started at ``y = 1..cutoff``.

    ``probs[y - 1, k]`` is the probability of exit point ``exits[k]``;
    ``loss`` bounds the effect of clamping the walk at ``cutoff``.
    """

    xi: IntDistribution
    cutoff: int
    exits: np.ndarray
    probs: np.ndarray
    loss: float

    def law(self, y: int) -> np.ndarray:
        if not 1 <= y <= self.cutoff:
            raise SpecError(f"start radius {y} outside 1..{self.cutoff}; raise radius_cutoff")
        return self.probs[y - 1]

    def mean(self, y: int) -> float:
        """Expected exit point from radius ``y``."""
        return float(self.law(y) @ self.exits)


def _overshoot_solve(xi: IntDistribution, cutoff: int) -> tuple[np.ndarray, np.ndarray]:
    a = _max_down(xi)
    b = max(0, xi.max)
    exits = np.arange(1 - a, 1)
    n = cutoff
    # banded storage of I - A; a walk above the cutoff is clamped back to it
    ab = np.zeros((a + b + 1, n))
    ab[b] = 1.0
    rhs = np.zeros((n, a))
    for v, p in xi.items():
        p = float(p)
        for y in range(1, n + 1):
            t = y + v
            if t <= 0:
                rhs[y - 1, t - (1 - a)] += p
            else:
                t = min(t, n)
                ab[b + (y - 1) - (t - 1), t - 1] -= p
    H = solve_banded((a, b), ab, rhs)
    return exits, H


def first_passage_overshoot(xi: IntDistribution, radius_cutoff: int = RADIUS_CUTOFF) -> OvershootTable:
    """Exit point below 1 of the walk with jumps ``xi`` from every start in ``1..radius_cutoff``.

    The first-step equations are solved as one banded system.  Paths that
    climb above the cutoff are held at the cutoff; the reported ``loss`` is
    the largest L1 change of the rows ``y <= cutoff/4`` when the cutoff is
    halved, an upper estimate of the clamping error.
    """
    if radius_cutoff < 8:
        raise ValueError("radius_cutoff must be at least 8")
    exits, H = _overshoot_solve(xi, radius_cutoff)
    _, H2 = _overshoot_solve(xi, radius_cutoff // 2)
    rows = radius_cutoff // 4
    loss = float(np.abs(H[:rows] - H2[:rows]).sum(axis=1).max())
    H = np.clip(H, 0.0, None)
    H /= H.sum(axis=1, keepdims=True)
    return OvershootTable(xi, radius_cutoff, exits, H, loss)


def ladder_height_law(xi: IntDistribution, radius_cutoff: int = 64) -> IntDistribution:
    """Law of the strict descending ladder height ``-S_T``, ``T`` the first time with ``S_T < 0``."""
    t = first_passage_overshoot(xi, radius_cutoff)
    row = t.law(1)
    keep = row > 0
    return IntDistribution(list(zip((1 - t.exits[keep]).tolist(), row[keep].tolist())))


# ---------------------------------------------------------------------------
# stationary laws


@dataclass
class StationaryDistribution:
    """Probabilities over embedded-chain states.

    ``truncation_loss`` is the estimated probability mass misplaced by the
    radius cutoff of the exact route (0 for Monte Carlo); ``stderr`` holds
    batch-means standard errors per state (empty for the exact route).
    """

    probs: dict
    truncation_loss: float = 0.0
    stderr: dict = field(default_factory=dict)
    samples: int = 0

    @property
    def first_moment(self) -> float:
        """Mean absolute radius (or position)."""
        return math.fsum(p * abs(s[0] if isinstance(s, tuple) else s) for s, p in self.probs.items())

    def __getitem__(self, state) -> float:
        return self.probs.get(state, 0.0)

    def total(self) -> float:
        return math.fsum(self.probs.values())


def _stationary_vector(P: np.ndarray, name: str) -> np.ndarray:
    n = P.shape[0]
    A = P.T - np.eye(n)
    sv = np.linalg.svd(A, compute_uv=False)
    if n > 1 and sv[-2] < 1e-10:
        raise EmbeddingError(f"{name} chain has more than one recurrent class")
    M = np.vstack([A, np.ones((1, n))])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    pi, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    if np.abs(M @ pi - rhs).max() > 1e-10:
        raise EmbeddingError(f"{name} chain: stationary equations are inconsistent")
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def _as_axis(spec: ChainSpec) -> AxisChainSpec:
    if isinstance(spec, MembraneWalkSpec):
        return unfold_membrane(spec)
    if isinstance(spec, SpiderWalkSpec):
        return spider_to_axis(spec)
    return spec


@dataclass
class EmbeddedChains:
    """Exact entrance and exit chains of an axis chain.

    ``H[s, e]`` is the probability that the excursion from entrance state
    ``s`` ends at exit state ``e``; ``Kmat[e, s]`` the critical move from
    exit ``e`` to entrance ``s``.
    """

    spec: AxisChainSpec
    exit_states: list
    entrance_states: list
    H: np.ndarray
    Kmat: np.ndarray
    pi_exit: np.ndarray
    pi_entrance: np.ndarray
    truncation_loss: float

    @property
    def exit(self) -> StationaryDistribution:
        return StationaryDistribution(dict(zip(self.exit_states, self.pi_exit.tolist())),
                                      self.truncation_loss)

    @property
    def entrance(self) -> StationaryDistribution:
        return StationaryDistribution(dict(zip(self.entrance_states, self.pi_entrance.tolist())),
                                      self.truncation_loss)

    @property
    def duality_error(self) -> float:
        """Largest gap between ``pi_exit`` pushed one step forward and ``pi_entrance``."""
        return float(max(np.abs(self.pi_exit @ self.Kmat - self.pi_entrance).max(),
                         np.abs(self.pi_entrance @ self.H - self.pi_exit).max()))


def embedded_exact(spec: ChainSpec, radius_cutoff: int = RADIUS_CUTOFF) -> EmbeddedChains:
    """Assemble and solve the entrance and exit chains of ``spec``.

    Membrane walks are unfolded and spider walks mapped to axis chains first.
    """
    ax = _as_axis(spec)
    ax.check()
    tables = [first_passage_overshoot(x, radius_cutoff) for x in ax.jumps]
    exit_states = [(int(u), i) for i in range(1, ax.m + 1) for u in tables[i - 1].exits]
    kernel_rows = [ax.critical_law(u, i) for (u, i) in exit_states]
    entrance_states = sorted({s for law in kernel_rows for s in law.values})
    ent_index = {s: k for k, s in enumerate(entrance_states)}
    ext_index = {s: k for k, s in enumerate(exit_states)}
    Kmat = np.zeros((len(exit_states), len(entrance_states)))
    for e, law in enumerate(kernel_rows):
        for s, p in law.items():
            Kmat[e, ent_index[s]] += float(p)
    H = np.zeros((len(entrance_states), len(exit_states)))
    for k, (y, j) in enumerate(entrance_states):
        t = tables[j - 1]
        for u, p in zip(t.exits, t.law(y)):
            H[k, ext_index[(int(u), j)]] += p
    loss = max(t.loss for t in tables)
    if loss > LOSS_WARN:
        warnings.warn(f"overshoot truncation loss {loss:.2e}; increase radius_cutoff", RuntimeWarning)
    pi_exit = _stationary_vector(Kmat @ H, "exit")
    pi_ent = _stationary_vector(H @ Kmat, "entrance")
    return EmbeddedChains(ax, exit_states, entrance_states, H, Kmat, pi_exit, pi_ent, loss)


def stationary_exact(spec: ChainSpec, radius_cutoff: int = RADIUS_CUTOFF):
    """Exact ``(pi_entrance, pi_exit)``.

    For membrane walks the states are positions ``X(tau)`` and ``X(sigma)``;
    otherwise ``(radius, label)`` pairs of the (mapped) axis chain.
    """
    if isinstance(spec, MembraneWalkSpec):
        return _membrane_stationary_exact(spec, radius_cutoff)[:2]
    emb = embedded_exact(spec, radius_cutoff)
    return emb.entrance, emb.exit


def _membrane_stationary_exact(spec: MembraneWalkSpec, radius_cutoff: int):
    """Entrance chain on positions built directly from the membrane exit laws."""
    spec.check()
    d = spec.d
    right = first_passage_overshoot(spec.xi_plus, radius_cutoff)
    left = first_passage_overshoot(spec.xi_minus.negated(), radius_cutoff)

    def exit_law(x):
        if x > d:
            return {d + int(u): p for u, p in zip(right.exits, right.law(x - d))}
        return {-d - int(u): p for u, p in zip(left.exits, left.law(-x - d))}

    def entrance_law(e):
        if abs(e) > d:
            return {e: 1.0}
        return {y: float(p) for y, p in membrane_exit_distribution(spec, e).items()}

    # close the entrance state set under one cycle
    states, frontier = set(), set()
    for x in spec.states:
        frontier |= set(entrance_law(x))
    while frontier:
        x = frontier.pop()
        states.add(x)
        for e in exit_law(x):
            for y in entrance_law(e):
                if y not in states:
                    frontier.add(y)
    ent = sorted(states)
    idx = {x: k for k, x in enumerate(ent)}
    P = np.zeros((len(ent), len(ent)))
    mean_exit = np.zeros(len(ent))
    exit_probs: dict = {}
    for x in ent:
        law = exit_law(x)
        mean_exit[idx[x]] = math.fsum(e * p for e, p in law.items())
        for e, p in law.items():
            for y, q in entrance_law(e).items():
                P[idx[x], idx[y]] += p * q
    pi = _stationary_vector(P, "entrance")
    for x, w in zip(ent, pi):
        for e, p in exit_law(x).items():
            exit_probs[e] = exit_probs.get(e, 0.0) + w * p
    loss = max(right.loss, left.loss)
    return (StationaryDistribution(dict(zip(ent, pi.tolist())), loss),
            StationaryDistribution(exit_probs, loss),
            np.array(ent), pi, mean_exit)


# ---------------------------------------------------------------------------
# Monte Carlo cycles


@dataclass
class CycleBatches:
    """Harvested excursions, one replica chain per batch.

    For axis and spider chains ``ent_r/ent_l`` hold the entrance states
    (``n + 1`` per batch) and ``ext_r/ext_l`` the exit states (``n`` per
    batch); spider exits are attempted landing points.  Membrane batches hold
    positions in ``ent_r``/``ext_r`` and no labels.
    """

    kind: str
    v: np.ndarray
    ent_r: list
    ent_l: list
    ext_r: list
    ext_l: list
    seed: int
    d: int = 0

    @property
    def batches(self) -> int:
        return len(self.ext_r)

    @property
    def cycles(self) -> int:
        return sum(len(x) for x in self.ext_r)

    @cached_property
    def unfolded(self) -> "CycleBatches":
        """Membrane batches in unfolded ``(radius, label)`` coordinates."""
        if self.kind != "membrane":
            return self
        d = self.d
        er, el, xr, xl = [], [], [], []
        for ent, ext in zip(self.ent_r, self.ext_r):
            lab = np.where(ent > d, PLUS, MINUS)
            er.append(np.where(lab == PLUS, ent - d, -ent - d))
            el.append(lab)
            xl.append(lab[:-1])
            xr.append(np.where(lab[:-1] == PLUS, ext - d, -ext - d))
        return CycleBatches("axis", self.v, er, el, xr, xl, self.seed, d)


def _ladder_tables(jumps, level: int):
    if level <= 0:
        one = [IntDistribution.point(1)] * len(jumps)
        return _jump_tables(one)
    return _jump_tables([ladder_height_law(x) for x in jumps])


def harvest_cycles(spec: ChainSpec, cycles: int, r: RngStream, burn_in: int = BURN_IN,
                   batches: int = BATCHES, threads: int = 1, level: int = LADDER_LEVEL,
                   budget: int = STEP_BUDGET, init=None) -> CycleBatches:
    """Run ``batches`` independent replica chains, keeping ``cycles / batches`` excursions each.

    Excursions from radii above ``level`` are completed by summing strict
    descending ladder heights, which is exact for the exit point and skips
    the long free stretches.  ``budget`` caps the random draws over all
    replicas; fewer than ``10 * burn_in`` completed cycles raise
    :class:`BudgetError`.
    """
    if cycles < batches:
        raise ValueError("need at least one cycle per batch")
    per = -(-cycles // batches)
    n = burn_in + per
    per_budget = np.uint64(max(1, budget // batches))
    streams = [r.child(b) for b in range(batches)]
    keys = [_key(s) for s in streams]

    if isinstance(spec, MembraneWalkSpec):
        spec.check()
        pv, pc, pn, mv, mc, mn, tv, tc, tn = spec.tables
        hp = [a[0] for a in _ladder_tables([spec.xi_plus], level)]
        hm = [a[0] for a in _ladder_tables([spec.xi_minus.negated()], level)]
        x0 = 0 if init is None else int(init)

        def run(b):
            ent, ext, done = K.harvest_membrane(n, per_budget, x0, keys[b], level, spec.d,
                                                pv, pc, pn, mv, mc, mn, hp[0], hp[1], int(hp[2]),
                                                hm[0], hm[1], int(hm[2]), tv, tc, tn)
            return ent[burn_in:done + 1], None, ext[burn_in:done], None, done
        v = np.array(spec.v)
        kind = "membrane"
    elif isinstance(spec, SpiderWalkSpec):
        spec.check()
        jv, jc, jn, oy, oj, oc, on_, *kt = spec.tables
        hv, hc, hn = _ladder_tables(spec.jumps, level)
        r0, l0 = (0, 0) if init is None else init

        def run(b):
            er, el, xr, xl, done, err = K.harvest_spider(n, per_budget, r0, l0 - 1, keys[b], level,
                                                         jv, jc, jn, hv, hc, hn, oy, oj, oc, on_, *kt)
            if err:
                raise SpecError("spider walk reached an undefined overshoot row")
            return (er[burn_in:done + 1], el[burn_in:done + 1] + 1,
                    xr[burn_in:done], xl[burn_in:done] + 1, done)
        v = spec.v
        kind = "spider"
    else:
        spec.check()
        jv, jc, jn, *kt = spec.tables
        hv, hc, hn = _ladder_tables(spec.jumps, level)
        r0, l0 = (0, 1) if init is None else init

        def run(b):
            er, el, xr, xl, done, err = K.harvest_axis(n, per_budget, r0, l0 - 1, keys[b], level,
                                                       jv, jc, jn, hv, hc, hn, *kt)
            if err:
                raise SpecError("axis chain reached an undefined critical row")
            return (er[burn_in:done + 1], el[burn_in:done + 1] + 1,
                    xr[burn_in:done], xl[burn_in:done] + 1, done)
        v = spec.v
        kind = "axis"

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            out = list(pool.map(run, range(batches)))
    else:
        out = [run(b) for b in range(batches)]
    kept = sum(max(0, o[4] - burn_in) for o in out)
    if kept < 10 * burn_in:
        raise BudgetError(f"only {kept} cycles completed within the budget of {budget} draws")
    if kept < per * batches:
        warnings.warn(f"step budget reached after {kept} of {per * batches} cycles", RuntimeWarning)
    return CycleBatches(kind, np.asarray(v, float), [o[0] for o in out], [o[1] for o in out],
                        [o[2] for o in out], [o[3] for o in out], r.seed,
                        spec.d if kind == "membrane" else 0)


def _batch_stats(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    values = np.asarray(values, float)
    mean = values.mean(axis=0)
    se = values.std(axis=0, ddof=1) / math.sqrt(values.shape[0])
    return mean, se


def _empirical(states_per_batch, as_key) -> StationaryDistribution:
    keys = sorted({as_key(s) for b in states_per_batch for s in b})
    freq = np.zeros((len(states_per_batch), len(keys)))
    idx = {k: j for j, k in enumerate(keys)}
    for b, batch in enumerate(states_per_batch):
        for s in batch:
            freq[b, idx[as_key(s)]] += 1
        freq[b] /= max(1, len(batch))
    mean, se = _batch_stats(freq)
    total = sum(len(b) for b in states_per_batch)
    return StationaryDistribution(dict(zip(keys, mean.tolist())), 0.0,
                                  dict(zip(keys, se.tolist())), total)


def stationary_mc(spec: ChainSpec, cycles: int, r: RngStream, burn_in: int = BURN_IN, **kw):
    """Empirical ``(pi_entrance, pi_exit)`` with batch-means standard errors."""
    cb = harvest_cycles(spec, cycles, r, burn_in=burn_in, **kw)
    return stationary_from_cycles(cb)


def stationary_from_cycles(cb: CycleBatches):
    if cb.kind == "membrane":
        ent = _empirical([e[1:] for e in cb.ent_r], int)
        ext = _empirical(cb.ext_r, int)
    else:
        ent = _empirical([list(zip(r[1:].tolist(), l[1:].tolist())) for r, l in zip(cb.ent_r, cb.ent_l)],
                         tuple)
        ext = _empirical([list(zip(r.tolist(), l.tolist())) for r, l in zip(cb.ext_r, cb.ext_l)], tuple)
    return ent, ext


def embedded_chains_from_path(path: CyclePath) -> tuple[list, list]:
    """Exit and entrance states observed along a simulated path."""
    if path.kind == "membrane":
        ext = [int(path.radius[k]) for k in path.sigma[1:]]
        ent = [int(path.radius[k]) for k in path.tau]
        return ext, ent
    ent = [path.state(int(k)) for k in path.tau]
    if path.kind == "spider":
        ext = [(int(z), int(path.label[k])) for k, z in zip(path.sigma, path.overshoot)]
    else:
        ext = [path.state(int(k)) for k in path.sigma]
    return ext, ent


# ---------------------------------------------------------------------------
# limit parameters


@dataclass
class WeightEstimate:
    """Ray weights with every evaluated expression and its standard error."""

    weights: np.ndarray
    forms: dict
    stderr: dict
    mode: str
    truncation_loss: float = 0.0


@dataclass
class MuEstimate:
    mu: float
    forms: dict
    stderr: dict
    mode: str


@dataclass
class GammaEstimate:
    """Permeability; ``degenerate`` marks a walk that never enters one side."""

    gamma: float
    forms: dict
    stderr: dict
    mode: str
    degenerate: bool = False
    truncation_loss: float = 0.0


def _exact_parts(emb: EmbeddedChains):
    v = emb.spec.v
    ey = np.array([s[0] for s in emb.entrance_states], float)
    el = np.array([s[1] for s in emb.entrance_states])
    xu = np.array([s[0] for s in emb.exit_states], float)
    xl = np.array([s[1] for s in emb.exit_states])
    return v, ey, el, xu, xl


def _weight_numerators_exact(emb: EmbeddedChains) -> dict:
    v, ey, el, xu, xl = _exact_parts(emb)
    pe, px = emb.pi_entrance, emb.pi_exit
    m = emb.spec.m
    out = {"a": np.zeros(m), "b": np.zeros(m), "c": np.zeros(m)}
    exit_mean = emb.H @ xu
    for k in range(1, m + 1):
        ink, xk = (el == k), (xl == k)
        out["a"][k - 1] = (pe @ (ey * ink) - px @ (xu * xk)) / v[k - 1]
        out["b"][k - 1] = pe @ ((ey - exit_mean) * ink) / v[k - 1]
        out["c"][k - 1] = px @ (emb.Kmat @ (ey * ink) - xu * xk) / v[k - 1]
    return out


def _mu_exact(emb: EmbeddedChains) -> dict:
    v, ey, el, xu, xl = _exact_parts(emb)
    pe, px = emb.pi_entrance, emb.pi_exit
    ye, ux = ey / v[el - 1], xu / v[xl - 1]
    return {
        "difference": float(pe @ ye - px @ ux),
        "exit_step": float(px @ (emb.Kmat @ ye - ux)),
        "excursion": float(pe @ (ye - emb.H @ ux)),
        "excursion_start_scale": float(pe @ ((ey - emb.H @ xu) / v[el - 1])),
    }


def _weight_numerators_mc(ent_r, ent_l, ext_r, ext_l, v, m) -> dict:
    n = len(ext_r)
    e0r, e0l = ent_r[:n], ent_l[:n]
    out = {"a": np.zeros(m), "b": np.zeros(m), "c": np.zeros(m)}
    for k in range(1, m + 1):
        vk = v[k - 1]
        out["a"][k - 1] = (np.mean(ent_r * (ent_l == k)) - np.mean(ext_r * (ext_l == k))) / vk
        out["b"][k - 1] = np.mean((e0r - ext_r) * (e0l == k)) / vk
        out["c"][k - 1] = np.mean(ent_r[1:] * (ent_l[1:] == k) - ext_r * (ext_l == k)) / vk
    return out


def _mu_mc(ent_r, ent_l, ext_r, ext_l, v) -> dict:
    n = len(ext_r)
    ye = ent_r / v[ent_l - 1]
    ux = ext_r / v[ext_l - 1]
    return {
        "difference": float(np.mean(ye) - np.mean(ux)),
        "exit_step": float(np.mean(ye[1:] - ux)),
        "excursion": float(np.mean(ye[:n] - ux)),
        "excursion_start_scale": float(np.mean((ent_r[:n] - ext_r) / v[ent_l[:n] - 1])),
    }


def _check_forms(forms: dict, stderr: dict, exact: bool, what: str) -> None:
    names = list(forms)
    ref = names[0]
    for name in names[1:]:
        gap = np.abs(np.asarray(forms[name]) - np.asarray(forms[ref]))
        if exact:
            tol = EXACT_TOL
        else:
            tol = 3 * np.sqrt(np.asarray(stderr[name]) ** 2 + np.asarray(stderr[ref]) ** 2) + 1e-12
        if np.any(gap > tol):
            raise ConsistencyError(f"{what}: form {name!r} differs from {ref!r} by {np.max(gap):.3e} "
                                   f"(tolerance {np.min(tol):.3e})")


def _normalise(num: np.ndarray, what: str) -> np.ndarray:
    total = num.sum()
    if not total > 0:
        raise ConsistencyError(f"{what}: normalising constant {total} is not positive")
    return num / total


def _source(source, radius_cutoff):
    if isinstance(source, (EmbeddedChains, CycleBatches)):
        return source.unfolded if isinstance(source, CycleBatches) else source
    return embedded_exact(source, radius_cutoff)


def compute_weights(source, radius_cutoff: int = RADIUS_CUTOFF, check: bool = True) -> WeightEstimate:
    """Ray weights from each of the three equivalent stationary expressions.

    ``source`` is a chain spec or :class:`EmbeddedChains` (exact route) or a
    :class:`CycleBatches` (Monte Carlo route).  Form ``"a"`` contrasts the
    entrance and exit means, ``"b"`` averages the excursion gain
    ``R(0) - R(sigma)`` over entrances and ``"c"`` averages the critical step
    over exits; each is normalised over rays.
    """
    src = _source(source, radius_cutoff)
    if isinstance(src, EmbeddedChains):
        nums = _weight_numerators_exact(src)
        forms = {k: _normalise(x, f"weights form {k}") for k, x in nums.items()}
        stderr = {k: np.zeros_like(x) for k, x in forms.items()}
        if check:
            _check_forms(forms, stderr, True, "weights")
        return WeightEstimate(forms["b"], forms, stderr, "exact", truncation_loss=src.truncation_loss)
    m = len(src.v)
    per_batch = {k: [] for k in "abc"}
    for er, el, xr, xl in zip(src.ent_r, src.ent_l, src.ext_r, src.ext_l):
        nums = _weight_numerators_mc(er, el, xr, xl, src.v, m)
        for k in "abc":
            per_batch[k].append(_normalise(nums[k], f"weights form {k}"))
    forms, stderr = {}, {}
    for k in "abc":
        forms[k], stderr[k] = _batch_stats(np.array(per_batch[k]))
    if check:
        _check_forms(forms, stderr, False, "weights")
    return WeightEstimate(forms["b"], forms, stderr, "mc")


def compute_mu(source, radius_cutoff: int = RADIUS_CUTOFF, check: bool = True) -> MuEstimate:
    """Drift rate of the local-time term from four equivalent expressions."""
    src = _source(source, radius_cutoff)
    if isinstance(src, EmbeddedChains):
        forms = _mu_exact(src)
        stderr = {k: 0.0 for k in forms}
        mode = "exact"
    else:
        rows = [_mu_mc(er, el, xr, xl, src.v)
                for er, el, xr, xl in zip(src.ent_r, src.ent_l, src.ext_r, src.ext_l)]
        forms, stderr = {}, {}
        for k in rows[0]:
            mean, se = _batch_stats(np.array([r[k] for r in rows]))
            forms[k], stderr[k] = float(mean), float(se)
        mode = "mc"
    if check:
        _check_forms(forms, stderr, mode == "exact", "mu")
    mu = forms["excursion_start_scale"]
    if not mu > 0:
        raise ConsistencyError(f"mu = {mu} is not positive")
    return MuEstimate(mu, forms, stderr, mode)


def compute_gamma_membrane(spec: MembraneWalkSpec, mode: str = "exact", *,
                           radius_cutoff: int = RADIUS_CUTOFF, cycles: int = 10**5,
                           r: RngStream | None = None, check: bool = True, **kw) -> GammaEstimate:
    """Permeability of a membrane walk.

    Evaluated as the stationary mean of ``phi(X(tau) - X(sigma_next))`` over
    its mean absolute value, as the same ratio with the scale picked by the
    sign of the entrance position, and as ``p_plus - p_minus`` of the
    unfolded two-label chain.
    """
    vp, vm = spec.v
    if mode == "exact":
        ent_dist, _, ent, pi, mean_exit = _membrane_stationary_exact(spec, radius_cutoff)
        gain = ent - mean_exit
        scale = np.where(ent > 0, vp, vm)
        phi_gain = gain / np.where(gain >= 0, vp, vm)
        forms = {
            "phi": float(pi @ phi_gain / (pi @ np.abs(phi_gain))),
            "sign_scale": float(pi @ (gain / scale) / (pi @ (np.abs(gain) / scale))),
        }
        w = compute_weights(unfold_membrane(spec), radius_cutoff, check=check)
        forms["unfolded"] = float(w.weights[0] - w.weights[1])
        stderr = {k: 0.0 for k in forms}
        loss = max(ent_dist.truncation_loss, w.truncation_loss)
        degenerate = not (np.any(pi[ent > 0] > 0) and np.any(pi[ent < 0] > 0))
    elif mode == "mc":
        if r is None:
            raise ValueError("Monte Carlo mode needs a random stream")
        cb = kw.pop("batches_data", None) or harvest_cycles(spec, cycles, r, **kw)
        rows = {"phi": [], "sign_scale": []}
        saw_pos = saw_neg = False
        for ent, ext in zip(cb.ent_r, cb.ext_r):
            e0 = ent[: len(ext)]
            gain = (e0 - ext).astype(float)
            phi_gain = gain / np.where(gain >= 0, vp, vm)
            scale = np.where(e0 > 0, vp, vm)
            rows["phi"].append(phi_gain.sum() / np.abs(phi_gain).sum())
            rows["sign_scale"].append((gain / scale).sum() / (np.abs(gain) / scale).sum())
            saw_pos |= bool(np.any(e0 > 0))
            saw_neg |= bool(np.any(e0 < 0))
        w = compute_weights(cb, check=check)
        forms, stderr = {}, {}
        for k, vals in rows.items():
            mean, se = _batch_stats(np.array(vals))
            forms[k], stderr[k] = float(mean), float(se)
        forms["unfolded"] = float(w.weights[0] - w.weights[1])
        stderr["unfolded"] = float(2 * w.stderr["b"][0])
        loss = 0.0
        degenerate = not (saw_pos and saw_neg)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if check:
        _check_forms(forms, stderr, mode == "exact", "gamma")
    gamma = forms["phi"]
    if degenerate or abs(gamma) >= 1:
        warnings.warn("one side of the membrane is never entered; permeability is degenerate",
                      RuntimeWarning)
        degenerate = True
    return GammaEstimate(gamma, forms, stderr, mode, degenerate, loss)


def compute_weights_spider(spec: SpiderWalkSpec, mode: str = "exact", *,
                           radius_cutoff: int = RADIUS_CUTOFF, cycles: int = 10**5,
                           r: RngStream | None = None, check: bool = True, **kw) -> WeightEstimate:
    """Ray weights of a spider walk from the stationary mean of ``R(tau) - z`` per ray.

    ``z`` is the attempted landing point ``R + xi <= 0`` that ends an
    excursion.  The exact route solves the entrance chain of the spider
    directly; the Monte Carlo route harvests spider excursions.
    """
    if mode == "exact":
        return compute_weights(spider_to_axis(spec), radius_cutoff, check=check)
    if r is None:
        raise ValueError("Monte Carlo mode needs a random stream")
    cb = harvest_cycles(spec, cycles, r, **kw)
    return compute_weights(cb, check=check)
