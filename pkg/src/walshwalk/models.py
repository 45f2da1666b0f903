"""Chain specifications, assumption checks, simulation and structural maps.

Three chain families are modelled:

* :class:`AxisChainSpec` -- radius/label chain on ``Z x {1..m}``.  While the
  radius is positive it moves by the ray's jump law with the label frozen;
  from a radius ``x <= 0`` the next state is drawn from a critical kernel.
* :class:`MembraneWalkSpec` -- walk on ``Z`` with free laws ``xi_plus`` above
  ``d`` and ``xi_minus`` below ``-d`` and an arbitrary kernel on the
  membrane ``{-d..d}`` giving the law of the next position.
* :class:`SpiderWalkSpec` -- walk on ``m`` half-lines glued at an origin.
  A jump landing exactly on 0 goes to the origin, a jump that would land at
  ``z < 0`` is redirected by an overshoot kernel.

Labels are 1-based everywhere in this module.  For unfolded membrane walks
label :data:`PLUS` (1) is the right half-line and :data:`MINUS` (2) the left.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from . import _kernels as K
from .distributions import (
    CheckResult,
    DistributionError,
    IntDistribution,
    RngStream,
    StateDistribution,
    moments,
    validate_1arithmetic,
    validate_centered_nondegenerate,
)

PLUS, MINUS = 1, 2
ORIGIN = (0, 0)
COMM_RADIUS = 200
SPECTRAL_TOL = 1e-10
SPECTRAL_MAXITER = 10_000


class SpecError(ValueError):
    """A chain specification is malformed or cannot be simulated."""


@dataclass(frozen=True)
class Extension:
    """Rule giving critical moves below the explicit kernel range of one label.

    ``kind`` is one of ``"none"``, ``"reflect"`` (reuse the lowest explicit
    row), ``"affine-cap"`` (deterministic move to radius
    ``min(ceil(a + b|x|), cap)`` on the same label) or ``"mirror"`` (move to
    ``-x - shift`` on the other label; two-label chains only).
    """

    kind: str = "none"
    a: float = 0.0
    b: float = 0.0
    cap: int = 1
    shift: int = 0

    KINDS = {"none": K.EXT_NONE, "reflect": K.EXT_REUSE, "affine-cap": K.EXT_AFFINE,
             "mirror": K.EXT_MIRROR}

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise SpecError(f"unknown extension kind {self.kind!r}")
        if self.kind == "affine-cap" and (self.cap < 1 or self.b < 0):
            raise SpecError("affine-cap extension needs cap >= 1 and b >= 0")

    def to_json(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "affine-cap":
            out.update(a=self.a, b=self.b, cap=self.cap)
        if self.kind == "mirror":
            out["shift"] = self.shift
        return out

    @classmethod
    def from_json(cls, obj: Mapping) -> "Extension":
        obj = dict(obj)
        unknown = set(obj) - {"kind", "a", "b", "cap", "shift"}
        if unknown:
            raise SpecError(f"unknown extension keys {sorted(unknown)}")
        return cls(kind=obj.get("kind", "none"), a=float(obj.get("a", 0.0)),
                   b=float(obj.get("b", 0.0)), cap=int(obj.get("cap", 1)),
                   shift=int(obj.get("shift", 0)))


def _max_down(xi: IntDistribution) -> int:
    return max(0, -xi.min)


def _jump_tables(jumps: Sequence[IntDistribution]):
    m = len(jumps)
    width = max(len(x) for x in jumps)
    jv = np.zeros((m, width), np.int64)
    jc = np.ones((m, width))
    jn = np.zeros(m, np.int64)
    for i, x in enumerate(jumps):
        jv[i, : len(x)] = x.support
        jc[i, : len(x)] = x.cdf
        jn[i] = len(x)
    return jv, jc, jn


def _kernel_tables(m: int, kernel: Mapping[tuple[int, int], StateDistribution],
                   extension: Sequence[Extension]):
    """Pack ``{(x, label): law over (y, label)}`` into dense per-label arrays."""
    kmin = np.zeros(m, np.int64)
    for i in range(m):
        xs = [x for (x, lab) in kernel if lab == i + 1]
        kmin[i] = min(xs) if xs else 0
    rows = int(max(1, (-kmin).max() + 1))
    width = max([len(d) for d in kernel.values()] or [1])
    ky = np.zeros((m, rows, width), np.int64)
    kj = np.zeros((m, rows, width), np.int64)
    kc = np.ones((m, rows, width))
    kn = np.zeros((m, rows), np.int64)
    for (x, lab), law in kernel.items():
        i = lab - 1
        row = x - kmin[i]
        n = len(law)
        ky[i, row, :n] = law.radii
        kj[i, row, :n] = law.labels - 1
        kc[i, row, :n] = law.cdf
        kn[i, row] = n
    ek = np.array([Extension.KINDS[e.kind] for e in extension], np.int64)
    ea = np.array([e.a for e in extension], float)
    eb = np.array([e.b for e in extension], float)
    ecap = np.array([e.cap for e in extension], np.int64)
    esh = np.array([e.shift for e in extension], np.int64)
    return ky, kj, kc, kn, kmin, ek, ea, eb, ecap, esh


def _parse_state_key(key) -> tuple[int, int]:
    if isinstance(key, tuple):
        x, lab = key
        return int(x), int(lab)
    parts = str(key).strip().strip("()[]").split(",")
    if len(parts) != 2:
        raise SpecError(f"kernel key {key!r} must be 'x,label'")
    return int(parts[0]), int(parts[1])


def _as_extensions(ext, m: int) -> tuple[Extension, ...]:
    if ext is None:
        return tuple(Extension() for _ in range(m))
    if isinstance(ext, Extension):
        return tuple(ext for _ in range(m))
    ext = tuple(ext)
    if len(ext) != m:
        raise SpecError(f"expected {m} extension rules, got {len(ext)}")
    return ext


def _jump_check(name: str, jumps: Sequence[IntDistribution], labels: Sequence) -> CheckResult:
    res = CheckResult(name)
    for lab, xi in zip(labels, jumps):
        c = validate_centered_nondegenerate(xi)
        for msg in c.failures:
            res.fail(f"jump law of {lab}: {msg}")
        if not validate_1arithmetic(xi):
            g = math.gcd(*[abs(v) for v in xi.values])
            res.fail(f"jump law of {lab} lives on the sublattice {g}Z")
    return res


def _strongly_connected(edges_from, nodes: list, required: list) -> list:
    """Required nodes outside the strong component of ``required[0]``."""
    index = {s: k for k, s in enumerate(nodes)}
    rows, cols = [], []
    for s in nodes:
        for t in edges_from(s):
            if t in index:
                rows.append(index[s])
                cols.append(index[t])
    g = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(nodes), len(nodes)))
    _, comp = connected_components(g, directed=True, connection="strong")
    ref = comp[index[required[0]]]
    return [s for s in required if comp[index[s]] != ref]


def _linear_bound(name: str, rows: Mapping[tuple[int, int], StateDistribution],
                  declared_C: float | None) -> CheckResult:
    res = CheckResult(name)
    need = 0.0
    for (x, lab), law in rows.items():
        mean = float(sum(p * max(y, 0) for (y, _), p in law.items()))
        c = mean / (1 + abs(x))
        need = max(need, c)
        if declared_C is not None and c > declared_C + 1e-12:
            res.fail(f"row ({x},{lab}) has mean target radius {mean:.6g} > C(1+|x|) with C={declared_C}")
    if declared_C is None:
        res.notes.append(f"no constant declared; smallest admissible C on the explicit range is {need:.6g}")
    return res


# ---------------------------------------------------------------------------
# paths


@dataclass
class CyclePath:
    """A simulated trajectory with its exit (``sigma``) and entrance (``tau``) indices.

    ``radius`` holds ``R`` for axis and spider chains (0 is the spider origin)
    and the position ``x`` for membrane walks, in which case ``label`` is None.
    ``overshoot`` holds, for spider paths, the attempted landing point
    ``R + xi <= 0`` recorded with each exit index.
    """

    kind: str
    radius: np.ndarray
    label: np.ndarray | None
    sigma: np.ndarray
    tau: np.ndarray
    overshoot: np.ndarray | None = None
    d: int = 0

    @property
    def length(self) -> int:
        return len(self.radius) - 1

    def state(self, k: int):
        if self.label is None:
            return int(self.radius[k])
        return int(self.radius[k]), int(self.label[k])

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            if self.label is None:
                w.writerow(["step", "x", "label"])
                for k, x in enumerate(self.radius):
                    w.writerow([k, int(x), ""])
            else:
                w.writerow(["step", "R", "label"])
                for k, (r, lab) in enumerate(zip(self.radius, self.label)):
                    w.writerow([k, int(r), int(lab)])


def axis_times(R: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exit indices ``{k : R(k) <= 0}`` and entrance indices ``sigma + 1`` inside the path."""
    sigma = np.flatnonzero(R <= 0).astype(np.int64)
    tau = sigma + 1
    return sigma, tau[tau < len(R)]


def membrane_times(X: np.ndarray, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Exit and entrance indices of a membrane path; ``sigma`` starts with 0."""
    sig, tau = K.membrane_times(np.asarray(X, np.int64), int(d))
    return np.concatenate([[0], sig]).astype(np.int64), tau


def spider_entrances(R: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """First positive index at or after 0 and strictly after each exit index."""
    pos = np.flatnonzero(R > 0)
    starts = np.concatenate([[0], sigma + 1])
    idx = np.searchsorted(pos, starts)
    idx = idx[idx < len(pos)]
    return np.unique(pos[idx])


def _key(r: RngStream) -> np.uint64:
    return np.uint64(r.gen.integers(0, 2**64, dtype=np.uint64))


# ---------------------------------------------------------------------------
# axis chains


@dataclass(frozen=True, eq=False)
class AxisChainSpec:
    """Radius/label chain; ``kernel[(x, i)]`` is the law of the next ``(y, j)`` from ``(x, i)``, ``x <= 0``."""

    jumps: tuple[IntDistribution, ...]
    kernel: Mapping[tuple[int, int], StateDistribution]
    extension: tuple[Extension, ...] = ()
    declared_C: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "jumps", tuple(self.jumps))
        object.__setattr__(self, "kernel", {_parse_state_key(k): v for k, v in self.kernel.items()})
        object.__setattr__(self, "extension", _as_extensions(self.extension or None, self.m))
        for (x, lab) in self.kernel:
            if x > 0:
                raise SpecError(f"critical kernel given at positive radius {x}")
            if not 1 <= lab <= self.m:
                raise SpecError(f"critical kernel label {lab} outside 1..{self.m}")

    @property
    def m(self) -> int:
        return len(self.jumps)

    @cached_property
    def v(self) -> np.ndarray:
        """Standard deviations of the ray jump laws."""
        return np.array([math.sqrt(float(moments(x)[1])) for x in self.jumps])

    @cached_property
    def tables(self):
        return _jump_tables(self.jumps) + _kernel_tables(self.m, self.kernel, self.extension)

    def exit_radii(self, label: int) -> range:
        """Radii at which a ray-``label`` excursion can end."""
        return range(1 - _max_down(self.jumps[label - 1]), 1)

    def critical_law(self, x: int, label: int) -> StateDistribution:
        """Law of the next state from ``(x, label)`` with ``x <= 0``, extension included."""
        if (x, label) in self.kernel:
            return self.kernel[(x, label)]
        ext = self.extension[label - 1]
        xs = [y for (y, lab) in self.kernel if lab == label]
        lowest = min(xs) if xs else 1
        if x < lowest:
            if ext.kind == "reflect" and xs:
                return self.kernel[(lowest, label)]
            if ext.kind == "affine-cap":
                y = max(1, min(math.ceil(ext.a + ext.b * abs(x)), ext.cap))
                return StateDistribution.point(y, label)
            if ext.kind == "mirror":
                return StateDistribution.point(-x - ext.shift, 3 - label)
        raise SpecError(f"no critical kernel row for state ({x},{label})")

    def validate(self) -> list[CheckResult]:
        labels = [f"ray {i}" for i in range(1, self.m + 1)]
        a1 = _jump_check("A1", self.jumps, labels)
        a2 = CheckResult("A2")
        for (x, lab), law in self.kernel.items():
            for (y, j) in law.values:
                if y < 1 or not 1 <= j <= self.m:
                    a2.fail(f"row ({x},{lab}) charges ({y},{j}) outside N x {{1..{self.m}}}")
        for i in range(1, self.m + 1):
            ext = self.extension[i - 1]
            if ext.kind == "mirror":
                if self.m != 2:
                    a2.fail("mirror extension needs exactly two labels")
                xs = [x for (x, lab) in self.kernel if lab == i]
                if xs and min(xs) > -ext.shift:
                    a2.fail(f"mirror extension of label {i} maps into non-positive radii")
            for x in self.exit_radii(i):
                try:
                    self.critical_law(x, i)
                except SpecError as exc:
                    a2.fail(str(exc))
        a3 = _linear_bound("A3", self.kernel, self.declared_C)
        for i, ext in enumerate(self.extension, 1):
            if ext.kind == "affine-cap":
                a3.notes.append(f"label {i} extension is bounded by {ext.cap}")
        a4 = CheckResult("A4")
        if a2.passed:
            a4 = self._communication()
        else:
            a4.notes.append("skipped: critical kernel incomplete")
        return [a1, a2, a3, a4]

    def _communication(self) -> CheckResult:
        res = CheckResult("A4")
        B = COMM_RADIUS

        def succ(s):
            x, i = s
            if x > 0:
                return [(x + v, i) for v in self.jumps[i - 1].values]
            try:
                return list(self.critical_law(x, i).values)
            except SpecError:
                return []

        lo = min(min(self.exit_radii(i)) for i in range(1, self.m + 1))
        lo = min([lo] + [x for (x, _) in self.kernel])
        nodes = [(x, i) for i in range(1, self.m + 1) for x in range(lo, B + 1)]
        required = [(x, i) for i in range(1, self.m + 1) for x in range(1, B // 2 + 1)]
        bad = _strongly_connected(succ, nodes, required)
        if bad:
            res.fail(f"{len(bad)} positive states do not communicate with (1,1), e.g. {bad[:5]}")
        res.notes.append(f"reachability checked on radii up to {B}")
        return res

    def check(self) -> None:
        """Raise :class:`SpecError` listing every failed assumption."""
        msgs = [f"{c.name}: {m}" for c in self.validate() for m in c.failures]
        if msgs:
            raise SpecError("; ".join(msgs))

    def to_json(self) -> dict:
        return {
            "type": "axis",
            "m": self.m,
            "jumps": [x.to_json() for x in self.jumps],
            "kernel": {f"{x},{lab}": law.to_json() for (x, lab), law in sorted(self.kernel.items())},
            "extension": {str(i): e.to_json() for i, e in enumerate(self.extension, 1)},
            "declared_C": self.declared_C,
        }


def simulate_axis(spec: AxisChainSpec, steps: int, init: tuple[int, int], r: RngStream) -> CyclePath:
    """Run ``steps`` transitions of an axis chain from ``init``."""
    r0, l0 = init
    if not 1 <= l0 <= spec.m:
        raise SpecError(f"initial label {l0} outside 1..{spec.m}")
    jv, jc, jn, *kt = spec.tables
    R, L, err, x, i = K.simulate_axis(int(steps), int(r0), int(l0 - 1), _key(r), jv, jc, jn, *kt)
    if err:
        raise SpecError(f"no critical kernel row for reached state ({x},{i + 1})")
    sigma, tau = axis_times(R)
    return CyclePath("axis", R, (L + 1).astype(np.int8), sigma, tau)


# ---------------------------------------------------------------------------
# membrane walks


@dataclass(frozen=True, eq=False)
class MembraneWalkSpec:
    """Walk on Z with free jump laws off ``{-d..d}``; ``kernel[x]`` is the law of the next position."""

    d: int
    xi_plus: IntDistribution
    xi_minus: IntDistribution
    kernel: Mapping[int, IntDistribution]
    declared_C: float | None = None

    def __post_init__(self):
        if self.d < 0:
            raise SpecError("membrane half-width must be >= 0")
        object.__setattr__(self, "kernel", {int(k): v for k, v in self.kernel.items()})
        extra = [x for x in self.kernel if abs(x) > self.d]
        if extra:
            raise SpecError(f"membrane kernel given outside the membrane at {extra}")

    @cached_property
    def v(self) -> tuple[float, float]:
        """Standard deviations ``(v_plus, v_minus)``."""
        return (math.sqrt(float(moments(self.xi_plus)[1])),
                math.sqrt(float(moments(self.xi_minus)[1])))

    @property
    def states(self) -> range:
        return range(-self.d, self.d + 1)

    @cached_property
    def tables(self):
        pv, pc, pn = (a[0] for a in _jump_tables([self.xi_plus]))
        mv, mc, mn = (a[0] for a in _jump_tables([self.xi_minus]))
        laws = [self.kernel[x] for x in self.states]
        tv, tc, tn = _jump_tables(laws)
        return pv, pc, int(pn), mv, mc, int(mn), tv, tc, tn

    def _membrane_matrix(self):
        n = 2 * self.d + 1
        A = np.zeros((n, n))
        for x in self.states:
            for y, p in self.kernel[x].items():
                if abs(y) <= self.d:
                    A[x + self.d, y + self.d] += float(p)
        return A

    def trapped_states(self) -> list[int]:
        """Membrane states from which leaving the membrane is impossible."""
        escape = {x for x in self.states if any(abs(y) > self.d for y in self.kernel[x].values)}
        changed = True
        while changed:
            changed = False
            for x in self.states:
                if x not in escape and any(y in escape for y in self.kernel[x].values):
                    escape.add(x)
                    changed = True
        return [x for x in self.states if x not in escape]

    def spectral_radius(self) -> float:
        """Spectral radius of membrane-to-membrane moves by power iteration."""
        A = self._membrane_matrix()
        v = np.ones(A.shape[0])
        rho = 0.0
        for _ in range(SPECTRAL_MAXITER):
            w = A @ v
            nw = np.abs(w).max()
            if nw == 0:
                return 0.0
            new = nw / np.abs(v).max()
            v = w / nw + 1e-300
            if abs(new - rho) < SPECTRAL_TOL:
                return new
            rho = new
        return rho

    def validate(self) -> list[CheckResult]:
        b1 = _jump_check("B1", [self.xi_plus, self.xi_minus], ["xi_plus", "xi_minus"])
        b2 = CheckResult("B2")
        missing = [x for x in self.states if x not in self.kernel]
        if missing:
            b2.fail(f"membrane kernel missing at {missing}")
        else:
            trapped = self.trapped_states()
            if trapped:
                b2.fail(f"membrane states {trapped} can never leave the membrane")
            b2.notes.append(f"spectral radius of membrane moves {self.spectral_radius():.12g}")
        b3 = CheckResult("B3")
        b3.notes.append("finite supports give a finite first moment")
        b4 = CheckResult("B4")
        if b2.passed:
            b4 = self._communication()
        else:
            b4.notes.append("skipped: membrane kernel invalid")
        return [b1, b2, b3, b4]

    def _communication(self) -> CheckResult:
        res = CheckResult("B4")
        B, d = COMM_RADIUS, self.d

        def succ(x):
            if x > d:
                return [x + v for v in self.xi_plus.values]
            if x < -d:
                return [x + v for v in self.xi_minus.values]
            return list(self.kernel[x].values)

        nodes = list(range(-B, B + 1))
        required = [d + 1] + [x for x in range(-B // 2, B // 2 + 1) if abs(x) > d]
        bad = _strongly_connected(succ, nodes, required)
        if bad:
            res.fail(f"{len(bad)} states outside the membrane do not communicate with {d + 1}, e.g. {bad[:5]}")
        res.notes.append(f"reachability checked on |x| <= {B}")
        return res

    def check(self) -> None:
        msgs = [f"{c.name}: {m}" for c in self.validate() for m in c.failures]
        if msgs:
            raise SpecError("; ".join(msgs))

    def to_json(self) -> dict:
        out = {
            "type": "membrane",
            "d": self.d,
            "jumps": {"plus": self.xi_plus.to_json(), "minus": self.xi_minus.to_json()},
            "kernel": {str(x): law.to_json() for x, law in sorted(self.kernel.items())},
        }
        if self.declared_C is not None:
            out["declared_C"] = self.declared_C
        return out


def simulate_membrane(spec: MembraneWalkSpec, steps: int, init: int, r: RngStream) -> CyclePath:
    """Run ``steps`` transitions of a membrane walk from position ``init``."""
    if any(x not in spec.kernel for x in spec.states):
        raise SpecError("membrane kernel incomplete")
    pv, pc, pn, mv, mc, mn, tv, tc, tn = spec.tables
    X = K.simulate_membrane(int(steps), int(init), _key(r), spec.d, pv, pc, pn, mv, mc, mn, tv, tc, tn)
    sigma, tau = membrane_times(X, spec.d)
    return CyclePath("membrane", X, None, sigma, tau, d=spec.d)


def membrane_exit_distribution(spec: MembraneWalkSpec, x: int) -> IntDistribution:
    """Law of the first position outside ``{-d..d}`` for the walk started at membrane state ``x``."""
    return _membrane_exit_laws(spec)[x]


def _membrane_exit_laws(spec: MembraneWalkSpec) -> dict[int, IntDistribution]:
    cache = spec.__dict__.get("_exit_laws")
    if cache is not None:
        return cache
    missing = [x for x in spec.states if x not in spec.kernel]
    if missing:
        raise SpecError(f"membrane kernel missing at {missing}")
    trapped = spec.trapped_states()
    if trapped:
        raise SpecError(f"exit system is singular: membrane states {trapped} are trapped")
    d = spec.d
    targets = sorted({y for law in spec.kernel.values() for y in law.values if abs(y) > d})
    col = {y: k for k, y in enumerate(targets)}
    A = spec._membrane_matrix()
    B = np.zeros((2 * d + 1, len(targets)))
    for x in spec.states:
        for y, p in spec.kernel[x].items():
            if abs(y) > d:
                B[x + d, col[y]] += float(p)
    H = np.linalg.solve(np.eye(2 * d + 1) - A, B)
    out = {}
    for x in spec.states:
        row = H[x + d]
        keep = row > 1e-15
        probs = row[keep] / row[keep].sum()
        out[x] = IntDistribution(list(zip(np.array(targets)[keep].tolist(), probs.tolist())))
    spec.__dict__["_exit_laws"] = out
    return out


def membrane_to_axis_state(x: int, d: int) -> tuple[int, int]:
    """Unfolded state of membrane position ``x``; inverse of :func:`axis_to_membrane_state`."""
    return (x - d, PLUS) if x >= -d else (-x - d, MINUS)


def axis_to_membrane_state(r: int, label: int, d: int) -> int | None:
    """Position represented by an unfolded state, or None for a duplicated jump-over step."""
    if r < -2 * d:
        return None
    return r + d if label == PLUS else -r - d


def unfold_membrane(spec: MembraneWalkSpec) -> AxisChainSpec:
    """Two-label axis chain whose radii are distances beyond the membrane edge.

    From an unfolded membrane state the chain jumps straight to the membrane
    exit position, so one step replaces the whole membrane sojourn.  Below
    ``-2d`` a jump-over is mirrored onto the other label in one extra step.
    """
    d = spec.d
    exits = _membrane_exit_laws(spec)
    kernel = {}
    for label in (PLUS, MINUS):
        for x in range(-2 * d, 1):
            point = x + d if label == PLUS else -x - d
            kernel[(x, label)] = StateDistribution(
                [(membrane_to_axis_state(e, d), p) for e, p in exits[point].items()])
    mirror = Extension("mirror", shift=2 * d)
    return AxisChainSpec((spec.xi_plus, spec.xi_minus.negated()), kernel, (mirror, mirror),
                         spec.declared_C)


def fold_axis_path(path: CyclePath, d: int) -> CyclePath:
    """Map an unfolded path back to positions, dropping duplicated jump-over steps."""
    R = path.radius.astype(np.int64)
    keep = R >= -2 * d
    X = np.where(path.label == PLUS, R + d, -R - d)[keep].astype(np.int32)
    sigma, tau = membrane_times(X, d)
    return CyclePath("membrane", X, None, sigma, tau, d=d)


def remove_membrane_time(path: CyclePath, d: int) -> tuple[CyclePath, np.ndarray]:
    """Delete membrane-to-membrane moves; returns the new path and ``lambda(k)``, ``k = 0..length``."""
    X = path.radius.astype(np.int64)
    inside = np.abs(X) <= d
    skip = np.zeros(len(X), np.int64)
    skip[1:] = inside[1:] & inside[:-1]
    lam = np.arange(len(X)) - np.cumsum(skip)
    # lambda^{-1}(k) = first j with lambda(j) >= k; lambda increases by 0 or 1
    first = np.flatnonzero(np.concatenate([[True], np.diff(lam) > 0]))
    Y = X[first].astype(np.int32)
    sigma, tau = membrane_times(Y, d)
    return CyclePath("membrane", Y, None, sigma, tau, d=d), lam


# ---------------------------------------------------------------------------
# spider walks


@dataclass(frozen=True, eq=False)
class SpiderWalkSpec:
    """Walk on ``m`` rays glued at an origin.

    ``origin_kernel`` is the law of ``(y, j)`` after a visit to the origin.
    ``overshoot[(z, i)]`` is the law of the state reached when ray ``i`` would
    land at ``z < 0``; target radius 0 stands for the origin.
    """

    jumps: tuple[IntDistribution, ...]
    origin_kernel: StateDistribution
    overshoot: Mapping[tuple[int, int], StateDistribution] = field(default_factory=dict)
    extension: tuple[Extension, ...] = ()
    declared_C: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "jumps", tuple(self.jumps))
        object.__setattr__(self, "overshoot",
                           {_parse_state_key(k): v for k, v in self.overshoot.items()})
        object.__setattr__(self, "extension", _as_extensions(self.extension or None, self.m))
        for (z, lab) in self.overshoot:
            if z >= 0:
                raise SpecError(f"overshoot kernel given at non-negative point {z}")
            if not 1 <= lab <= self.m:
                raise SpecError(f"overshoot label {lab} outside 1..{self.m}")
        for e in self.extension:
            if e.kind == "mirror":
                raise SpecError("mirror extension is not available for spider walks")

    @property
    def m(self) -> int:
        return len(self.jumps)

    @cached_property
    def v(self) -> np.ndarray:
        return np.array([math.sqrt(float(moments(x)[1])) for x in self.jumps])

    def _overshoot_law(self, z: int, label: int) -> StateDistribution:
        if (z, label) in self.overshoot:
            return self.overshoot[(z, label)]
        ext = self.extension[label - 1]
        zs = [y for (y, lab) in self.overshoot if lab == label]
        if zs and z < min(zs):
            if ext.kind == "reflect":
                return self.overshoot[(min(zs), label)]
        if (not zs or z < min(zs)) and ext.kind == "affine-cap":
            y = max(1, min(math.ceil(ext.a + ext.b * abs(z)), ext.cap))
            return StateDistribution.point(y, label)
        raise SpecError(f"no overshoot kernel row for ({z},{label})")

    @cached_property
    def tables(self):
        jv, jc, jn = _jump_tables(self.jumps)
        o = self.origin_kernel
        oy, oj, oc, on_ = o.radii.copy(), o.labels - 1, o.cdf, len(o)
        kt = _kernel_tables(self.m, self.overshoot, self.extension)
        return (jv, jc, jn, oy, oj, oc, on_) + kt

    def validate(self) -> list[CheckResult]:
        labels = [f"ray {i}" for i in range(1, self.m + 1)]
        c1 = _jump_check("C1", self.jumps, labels)
        for i in range(1, self.m + 1):
            for z in range(1 - _max_down(self.jumps[i - 1]), 0):
                try:
                    law = self._overshoot_law(z, i)
                except SpecError as exc:
                    c1.fail(str(exc))
                    continue
                for (y, j) in law.values:
                    if y < 0 or (y > 0 and not 1 <= j <= self.m):
                        c1.fail(f"overshoot row ({z},{i}) charges invalid state ({y},{j})")
        c2 = CheckResult("C2")
        for (y, j) in self.origin_kernel.values:
            if y < 1 or not 1 <= j <= self.m:
                c2.fail(f"origin kernel charges ({y},{j}) outside N x {{1..{self.m}}}")
        c3 = _linear_bound("C3", self.overshoot, self.declared_C)
        c4 = CheckResult("C4")
        if c1.passed and c2.passed:
            c4 = self._communication()
        else:
            c4.notes.append("skipped: kernels invalid")
        return [c1, c2, c3, c4]

    def _communication(self) -> CheckResult:
        res = CheckResult("C4")
        B = COMM_RADIUS

        def norm(s):
            return ORIGIN if s[0] <= 0 else s

        def succ(s):
            x, i = s
            if x <= 0:
                return [norm(t) for t in self.origin_kernel.values]
            out = []
            for v in self.jumps[i - 1].values:
                z = x + v
                if z > 0:
                    out.append((z, i))
                elif z == 0:
                    out.append(ORIGIN)
                else:
                    out.extend(norm(t) for t in self._overshoot_law(z, i).values)
            return out

        nodes = [ORIGIN] + [(x, i) for i in range(1, self.m + 1) for x in range(1, B + 1)]
        required = [ORIGIN] + [(x, i) for i in range(1, self.m + 1) for x in range(1, B // 2 + 1)]
        bad = _strongly_connected(succ, nodes, required)
        if bad:
            res.fail(f"{len(bad)} states do not communicate with the origin, e.g. {bad[:5]}")
        res.notes.append(f"reachability checked on radii up to {B}")
        return res

    def check(self) -> None:
        msgs = [f"{c.name}: {m}" for c in self.validate() for m in c.failures]
        if msgs:
            raise SpecError("; ".join(msgs))

    def to_json(self) -> dict:
        return {
            "type": "spider",
            "m": self.m,
            "jumps": [x.to_json() for x in self.jumps],
            "origin": self.origin_kernel.to_json(),
            "kernel": {f"{z},{lab}": law.to_json() for (z, lab), law in sorted(self.overshoot.items())},
            "extension": {str(i): e.to_json() for i, e in enumerate(self.extension, 1)},
            "declared_C": self.declared_C,
        }


def simulate_spider(spec: SpiderWalkSpec, steps: int, init: tuple[int, int], r: RngStream) -> CyclePath:
    """Run a spider walk; radius 0 (label 0) is the origin."""
    r0, l0 = init
    if r0 <= 0:
        r0, l0 = 0, 0
    elif not 1 <= l0 <= spec.m:
        raise SpecError(f"initial label {l0} outside 1..{spec.m}")
    R, L, sig, zs, err, z, i = K.simulate_spider(int(steps), int(r0), int(l0 - 1), _key(r), *spec.tables)
    if err:
        raise SpecError(f"no overshoot kernel row for reached point ({z},{i + 1})")
    tau = spider_entrances(R, sig)
    return CyclePath("spider", R, (L + 1).astype(np.int8), sig, tau, overshoot=zs)


def spider_to_axis(spec: SpiderWalkSpec) -> AxisChainSpec:
    """Axis chain with the same embedded entrance chain as the spider walk.

    The attempted landing point ``z <= 0`` becomes an axis exit state; its
    critical row is the origin kernel for ``z = 0`` and the overshoot law,
    with origin mass passed through the origin kernel, for ``z < 0``.
    """
    def compose(law: StateDistribution) -> StateDistribution:
        mass: dict = {}
        for (y, j), p in law.items():
            if y > 0:
                mass[(y, j)] = mass.get((y, j), 0) + p
            else:
                for s, q in spec.origin_kernel.items():
                    mass[s] = mass.get(s, 0) + p * q
        return StateDistribution(mass)

    kernel = {}
    ext = []
    for i in range(1, spec.m + 1):
        kernel[(0, i)] = spec.origin_kernel
        zs = [z for (z, lab) in spec.overshoot if lab == i]
        for z in zs:
            kernel[(z, i)] = compose(spec.overshoot[(z, i)])
        e = spec.extension[i - 1]
        for z in range(1 - _max_down(spec.jumps[i - 1]), min(zs + [0])):
            kernel[(z, i)] = compose(spec._overshoot_law(z, i))
        ext.append(e if e.kind in ("reflect", "affine-cap") else Extension())
    return AxisChainSpec(spec.jumps, kernel, tuple(ext), spec.declared_C)


# ---------------------------------------------------------------------------
# serialisation

ChainSpec = AxisChainSpec | MembraneWalkSpec | SpiderWalkSpec
_SPEC_KEYS = {
    "axis": {"type", "m", "jumps", "kernel", "extension", "declared_C"},
    "membrane": {"type", "d", "jumps", "kernel", "declared_C"},
    "spider": {"type", "m", "jumps", "origin", "kernel", "extension", "declared_C"},
}


def _extensions_from_json(obj, m: int) -> tuple[Extension, ...]:
    if obj is None:
        return _as_extensions(None, m)
    if "kind" in obj:
        return _as_extensions(Extension.from_json(obj), m)
    out = []
    for i in range(1, m + 1):
        e = obj.get(str(i))
        out.append(Extension.from_json(e) if e is not None else Extension())
    extra = set(obj) - {str(i) for i in range(1, m + 1)}
    if extra:
        raise SpecError(f"extension given for unknown labels {sorted(extra)}")
    return tuple(out)


def _jumps_list(obj, m: int) -> list[IntDistribution]:
    if isinstance(obj, Mapping):
        obj = [obj] * m
    if len(obj) != m:
        raise SpecError(f"expected {m} jump laws, got {len(obj)}")
    return [IntDistribution.from_json(x) for x in obj]


def spec_from_json(obj: Mapping) -> ChainSpec:
    """Build a chain spec from its JSON object; unknown keys are rejected."""
    try:
        kind = obj["type"]
        if kind not in _SPEC_KEYS:
            raise SpecError(f"unknown chain type {kind!r}")
        unknown = set(obj) - _SPEC_KEYS[kind]
        if unknown:
            raise SpecError(f"unknown keys for {kind} spec: {sorted(unknown)}")
        C = obj.get("declared_C")
        C = None if C is None else float(C)
        if kind == "membrane":
            jumps = obj["jumps"]
            kernel = {int(x): IntDistribution.from_json(v) for x, v in obj["kernel"].items()}
            return MembraneWalkSpec(int(obj["d"]), IntDistribution.from_json(jumps["plus"]),
                                    IntDistribution.from_json(jumps["minus"]), kernel, C)
        m = int(obj["m"])
        jumps = _jumps_list(obj["jumps"], m)
        kernel = {_parse_state_key(k): StateDistribution.from_json(v)
                  for k, v in obj.get("kernel", {}).items()}
        ext = _extensions_from_json(obj.get("extension"), m)
        if kind == "axis":
            return AxisChainSpec(jumps, kernel, ext, C)
        return SpiderWalkSpec(jumps, StateDistribution.from_json(obj["origin"]), kernel, ext, C)
    except SpecError:
        raise
    except (KeyError, TypeError, ValueError, DistributionError) as exc:
        raise SpecError(f"invalid chain spec: {exc!r}") from exc


def load_spec(path: str | Path) -> ChainSpec:
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SpecError(f"{path}: {exc}") from exc
    return spec_from_json(obj)


def dump_spec(spec: ChainSpec, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(spec.to_json(), fh, indent=2)


def simulate(spec: ChainSpec, steps: int, init, r: RngStream) -> CyclePath:
    if isinstance(spec, AxisChainSpec):
        return simulate_axis(spec, steps, init, r)
    if isinstance(spec, MembraneWalkSpec):
        return simulate_membrane(spec, steps, init, r)
    return simulate_spider(spec, steps, init, r)
