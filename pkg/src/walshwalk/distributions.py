"""Finite-support integer laws and reproducible random streams.

Probabilities are kept as :class:`fractions.Fraction` when every atom is
given as a rational (int, ``Fraction`` or a ``"num/den"`` string) and as
floats otherwise.  In exact mode the normalisation, mean and variance are
exact; in float mode the normalisation tolerance is ``1e-12``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, reduce
from numbers import Rational
from typing import Any, Hashable, Iterable, Mapping

import numpy as np

PROB_TOL = 1e-12


class DistributionError(ValueError):
    """Raised when a list of atoms does not define a probability law."""


def _parse_prob(p: Any) -> Fraction | float:
    if isinstance(p, bool):
        raise DistributionError(f"invalid probability {p!r}")
    if isinstance(p, Fraction):
        return p
    if isinstance(p, Rational):
        return Fraction(int(p.numerator), int(p.denominator))
    if isinstance(p, str):
        try:
            return Fraction(p.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise DistributionError(f"cannot parse probability {p!r}") from exc
    try:
        return float(p)
    except (TypeError, ValueError) as exc:
        raise DistributionError(f"cannot parse probability {p!r}") from exc


def _format_prob(p: Fraction | float) -> str | float:
    if isinstance(p, Fraction):
        return f"{p.numerator}/{p.denominator}"
    return float(p)


class _FiniteLaw:
    """Shared validation and sampling for finite laws over hashable atoms."""

    def __init__(self, atoms: Mapping[Hashable, Any] | Iterable[tuple[Hashable, Any]]):
        items = list(atoms.items()) if isinstance(atoms, Mapping) else list(atoms)
        if not items:
            raise DistributionError("support must be non-empty")
        values = [self._coerce_value(v) for v, _ in items]
        if len(set(values)) != len(values):
            raise DistributionError("atom values must be pairwise distinct")
        probs = [_parse_prob(p) for _, p in items]
        if any(isinstance(p, float) for p in probs):
            probs = [float(p) for p in probs]
        for v, p in zip(values, probs):
            if not p > 0:
                raise DistributionError(f"probability of atom {v!r} must be positive, got {p}")
            if p > 1:
                raise DistributionError(f"probability of atom {v!r} exceeds 1")
        total = sum(probs)
        if self._exact_probs(probs):
            if total != 1:
                raise DistributionError(f"probabilities sum to {total}, not 1")
        elif abs(total - 1.0) > PROB_TOL:
            raise DistributionError(f"probabilities sum to {total!r}, not 1 within {PROB_TOL}")
        order = sorted(range(len(values)), key=lambda k: values[k])
        self._values = tuple(values[k] for k in order)
        self._probs = tuple(probs[k] for k in order)

    @staticmethod
    def _exact_probs(probs) -> bool:
        return all(isinstance(p, Fraction) for p in probs)

    @staticmethod
    def _coerce_value(v):
        return v

    @property
    def values(self) -> tuple:
        return self._values

    @property
    def probs(self) -> tuple:
        return self._probs

    @property
    def exact(self) -> bool:
        return self._exact_probs(self._probs)

    def items(self):
        return zip(self._values, self._probs)

    def prob(self, value) -> Fraction | float:
        for v, p in self.items():
            if v == value:
                return p
        return Fraction(0) if self.exact else 0.0

    def __len__(self) -> int:
        return len(self._values)

    def __eq__(self, other) -> bool:
        if type(other) is not type(self):
            return NotImplemented
        return self._values == other._values and self._probs == other._probs

    def __hash__(self) -> int:
        return hash((self._values, self._probs))

    @cached_property
    def cdf(self) -> np.ndarray:
        c = np.cumsum(np.array([float(p) for p in self._probs]))
        c[-1] = 1.0
        return c

    def __repr__(self) -> str:
        body = ", ".join(f"{v!r}: {_format_prob(p)}" for v, p in self.items())
        return f"{type(self).__name__}({{{body}}})"


class IntDistribution(_FiniteLaw):
    """A probability law on finitely many integers.

    Examples
    --------
    >>> d = IntDistribution({-1: "2/3", 2: "1/3"})
    >>> moments(d)
    (Fraction(0, 1), Fraction(2, 1))
    """

    @staticmethod
    def _coerce_value(v):
        if isinstance(v, (bool, float)) or int(v) != v:
            raise DistributionError(f"atom {v!r} is not an integer")
        return int(v)

    @cached_property
    def support(self) -> np.ndarray:
        return np.array(self._values, dtype=np.int64)

    @property
    def min(self) -> int:
        return self._values[0]

    @property
    def max(self) -> int:
        return self._values[-1]

    def negated(self) -> "IntDistribution":
        return IntDistribution([(-v, p) for v, p in self.items()])

    def to_json(self) -> dict:
        return {"atoms": [[v, _format_prob(p)] for v, p in self.items()]}

    @classmethod
    def from_json(cls, obj: Mapping) -> "IntDistribution":
        return cls([(v, p) for v, p in obj["atoms"]])

    @classmethod
    def point(cls, value: int) -> "IntDistribution":
        return cls({value: 1})


class StateDistribution(_FiniteLaw):
    """A finite law over chain states encoded as integer pairs ``(radius, label)``."""

    @staticmethod
    def _coerce_value(v):
        try:
            r, lab = v
        except (TypeError, ValueError) as exc:
            raise DistributionError(f"state atom {v!r} must be a (radius, label) pair") from exc
        return (IntDistribution._coerce_value(r), IntDistribution._coerce_value(lab))

    @cached_property
    def radii(self) -> np.ndarray:
        return np.array([v[0] for v in self._values], dtype=np.int64)

    @cached_property
    def labels(self) -> np.ndarray:
        return np.array([v[1] for v in self._values], dtype=np.int64)

    def mean_radius(self) -> Fraction | float:
        return sum(p * v[0] for v, p in self.items())

    def to_json(self) -> dict:
        return {"atoms": [[list(v), _format_prob(p)] for v, p in self.items()]}

    @classmethod
    def from_json(cls, obj: Mapping) -> "StateDistribution":
        return cls([(tuple(v), p) for v, p in obj["atoms"]])

    @classmethod
    def point(cls, radius: int, label: int) -> "StateDistribution":
        return cls({(radius, label): 1})


def moments(d: IntDistribution):
    """Mean and variance of ``d``; exact ``Fraction`` values in rational mode."""
    mean = sum(p * v for v, p in d.items())
    second = sum(p * v * v for v, p in d.items())
    return mean, second - mean * mean


@dataclass
class CheckResult:
    """Outcome of an assumption check; falsy when any condition failed."""

    name: str
    failures: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def __bool__(self) -> bool:
        return self.passed

    def fail(self, msg: str) -> None:
        self.failures.append(msg)

    def merge(self, other: "CheckResult") -> "CheckResult":
        self.failures.extend(f"{other.name}: {m}" for m in other.failures)
        self.notes.extend(f"{other.name}: {m}" for m in other.notes)
        return self


def validate_centered_nondegenerate(d: IntDistribution) -> CheckResult:
    res = CheckResult("centered")
    mean, var = moments(d)
    if d.exact:
        if mean != 0:
            res.fail(f"mean is {mean}, expected 0")
        if not var > 0:
            res.fail("variance is 0")
    else:
        if abs(mean) > PROB_TOL:
            res.fail(f"mean is {mean!r}, expected 0")
        if not var > PROB_TOL:
            res.fail("variance is 0")
    return res


def validate_1arithmetic(d: IntDistribution) -> bool:
    """True iff the support of ``d`` generates the whole lattice of integers."""
    return reduce(math.gcd, (abs(v) for v in d.values), 0) == 1


class RngStream:
    """An independent, reproducible random stream indexed by ``(seed, stream_index)``.

    Streams are backed by the counter-based Philox generator keyed through
    :class:`numpy.random.SeedSequence`, so stream ``k`` of a seed is the same
    no matter which worker draws it or in which order streams are created.
    """

    def __init__(self, seed: int, stream_index: int = 0):
        if seed < 0 or stream_index < 0:
            raise ValueError("seed and stream_index must be non-negative")
        self.seed = int(seed)
        self.stream_index = int(stream_index)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_index,))
        self.gen = np.random.Generator(np.random.Philox(ss))

    def random(self, size=None):
        return self.gen.random(size)

    def child(self, index: int) -> "RngStream":
        """A stream independent of this one and of its siblings."""
        child = RngStream.__new__(RngStream)
        child.seed = self.seed
        child.stream_index = self.stream_index
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_index, int(index)))
        child.gen = np.random.Generator(np.random.Philox(ss))
        return child

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_index={self.stream_index})"


def sample(d: _FiniteLaw, r: RngStream, size: int | None = None):
    """Draw from ``d`` by inversion of its cumulative table."""
    u = r.random(size)
    idx = np.searchsorted(d.cdf, u, side="right")
    if size is None:
        return d.values[int(idx)]
    if isinstance(d, IntDistribution):
        return d.support[idx]
    return [d.values[k] for k in idx]
