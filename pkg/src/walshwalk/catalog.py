"""Ready-made chains with known limit parameters, and random small specs."""

from __future__ import annotations

import math
from fractions import Fraction
from functools import reduce

import numpy as np

from .distributions import IntDistribution, StateDistribution, _parse_prob
from .models import (
    AxisChainSpec,
    MembraneWalkSpec,
    SpecError,
    SpiderWalkSpec,
)


def simple_walk() -> IntDistribution:
    return IntDistribution({-1: Fraction(1, 2), 1: Fraction(1, 2)})


def harrison_shepp(p) -> MembraneWalkSpec:
    """Simple walk whose membrane point 0 steps right with probability ``p`` (permeability ``2p - 1``)."""
    p = _parse_prob(p)
    atoms = [(y, w) for y, w in ((1, p), (-1, 1 - p)) if w > 0]
    return MembraneWalkSpec(0, simple_walk(), simple_walk(), {0: IntDistribution(atoms)})


def two_point_membrane(alpha, beta, d: int = 1) -> MembraneWalkSpec:
    """Simple walk leaving ``{-d..d}`` only to ``+-(d + 1)``.

    From ``-d`` the walk crosses to ``d + 1`` with probability ``alpha``; from
    ``d`` it crosses to ``-d - 1`` with probability ``beta``.  Interior
    points move by +-1.  The permeability is ``(alpha - beta) / (alpha + beta)``.
    """
    if d < 1:
        raise SpecError("the two-point membrane needs d >= 1")
    alpha, beta = _parse_prob(alpha), _parse_prob(beta)
    half = Fraction(1, 2)
    kernel = {x: IntDistribution({x - 1: half, x + 1: half}) for x in range(-d + 1, d)}
    kernel[-d] = IntDistribution([(y, w) for y, w in ((d + 1, alpha), (-d - 1, 1 - alpha)) if w > 0])
    kernel[d] = IntDistribution([(y, w) for y, w in ((-d - 1, beta), (d + 1, 1 - beta)) if w > 0])
    return MembraneWalkSpec(d, simple_walk(), simple_walk(), kernel)


def oscillating_martingale_membrane() -> MembraneWalkSpec:
    """Martingale walk with jump scale 2 on the right, 1 on the left and a fair step at 0."""
    wide = IntDistribution({-3: Fraction(3, 16), -1: Fraction(5, 16), 1: Fraction(5, 16), 3: Fraction(3, 16)})
    return MembraneWalkSpec(0, wide, simple_walk(), {0: simple_walk()})


def matrix_perturbed_axis(Q) -> AxisChainSpec:
    """Simple-walk rays re-entering at radius 1 on ray ``j`` with probability ``Q[i][j]`` from ``(0, i)``."""
    m = len(Q)
    kernel = {(0, i + 1): StateDistribution([((1, j + 1), Q[i][j]) for j in range(m) if Q[i][j] != 0])
              for i in range(m)}
    return AxisChainSpec([simple_walk()] * m, kernel)


def symmetric_spider(m: int) -> SpiderWalkSpec:
    """Simple-walk rays with a uniform choice of ray after each visit to the origin."""
    origin = StateDistribution([((1, j), Fraction(1, m)) for j in range(1, m + 1)])
    return SpiderWalkSpec([simple_walk()] * m, origin)


def sticky_origin_line(xi_plus: IntDistribution, xi_minus: IntDistribution,
                       eta: IntDistribution) -> SpiderWalkSpec:
    """Two-ray spider for a line walk sent to 0 whenever it would reach or cross 0.

    Ray 1 carries the positive half-line with jumps ``xi_plus``; ray 2 the
    negative half-line, whose radius ``-y`` moves by ``-xi_minus``.  From 0
    the walk jumps to ``eta``; an atom of ``eta`` at 0 only delays the walk
    and is removed by conditioning.
    """
    atoms = [(((abs(y), 1 if y > 0 else 2)), p) for y, p in eta.items() if y != 0]
    total = sum(p for _, p in atoms)
    origin = StateDistribution([(s, p / total) for s, p in atoms])
    jumps = [xi_plus, xi_minus.negated()]
    overshoot = {}
    for i, xi in enumerate(jumps, 1):
        for z in range(1 + xi.min, 0):
            overshoot[(z, i)] = StateDistribution.point(0, 0)
    return SpiderWalkSpec(jumps, origin, overshoot)


def ngo_peigne_example() -> SpiderWalkSpec:
    xi_plus = IntDistribution({-2: Fraction(1, 3), 1: Fraction(2, 3)})
    xi_minus = IntDistribution({-1: Fraction(2, 3), 2: Fraction(1, 3)})
    eta = IntDistribution({-2: Fraction(3, 10), -1: Fraction(1, 5), 1: Fraction(1, 4), 3: Fraction(1, 4)})
    return sticky_origin_line(xi_plus, xi_minus, eta)


# ---------------------------------------------------------------------------
# random small specs


def _random_probs(rng: np.random.Generator, n: int) -> list[Fraction]:
    w = rng.integers(1, 6, size=n)
    return [Fraction(int(x), int(w.sum())) for x in w]


def random_jump(rng: np.random.Generator, max_jump: int = 3) -> IntDistribution:
    """Centred law on ``[-max_jump, max_jump]`` as a mixture of two-point centred laws, gcd 1."""
    while True:
        parts = int(rng.integers(1, 3))
        mix = _random_probs(rng, parts)
        atoms: dict[int, Fraction] = {}
        for w in mix:
            a, b = (int(v) for v in rng.integers(1, max_jump + 1, size=2))
            atoms[-a] = atoms.get(-a, 0) + w * Fraction(b, a + b)
            atoms[b] = atoms.get(b, 0) + w * Fraction(a, a + b)
        if reduce(math.gcd, (abs(v) for v in atoms)) == 1:
            return IntDistribution(atoms)


def _random_law(rng, choices: list, low: int = 1, high: int = 3):
    k = int(rng.integers(low, min(high, len(choices)) + 1))
    pick = rng.choice(len(choices), size=k, replace=False)
    return [(choices[int(c)], p) for c, p in zip(pick, _random_probs(rng, k))]


def random_axis(rng: np.random.Generator, m: int | None = None) -> AxisChainSpec:
    m = int(rng.integers(2, 4)) if m is None else m
    while True:
        jumps = [random_jump(rng) for _ in range(m)]
        targets = [(y, j) for y in range(1, 4) for j in range(1, m + 1)]
        kernel = {}
        for i, xi in enumerate(jumps, 1):
            for x in range(1 + xi.min, 1):
                kernel[(x, i)] = StateDistribution(_random_law(rng, targets, 1, 4))
        spec = AxisChainSpec(jumps, kernel)
        if all(c.passed for c in spec.validate()):
            return spec


def random_membrane(rng: np.random.Generator, d: int | None = None) -> MembraneWalkSpec:
    d = int(rng.integers(0, 3)) if d is None else d
    while True:
        xp, xm = random_jump(rng), random_jump(rng)
        targets = list(range(-d - 3, d + 4))
        kernel = {x: IntDistribution(_random_law(rng, targets, 2, 4)) for x in range(-d, d + 1)}
        spec = MembraneWalkSpec(d, xp, xm, kernel)
        if all(c.passed for c in spec.validate()):
            return spec


def random_spider(rng: np.random.Generator, m: int | None = None) -> SpiderWalkSpec:
    m = int(rng.integers(2, 4)) if m is None else m
    while True:
        jumps = [random_jump(rng) for _ in range(m)]
        entries = [(y, j) for y in range(1, 4) for j in range(1, m + 1)]
        origin = StateDistribution(_random_law(rng, entries, 1, 4))
        overshoot = {}
        for i, xi in enumerate(jumps, 1):
            for z in range(1 + xi.min, 0):
                law = _random_law(rng, [(0, 0)] + entries, 1, 3)
                overshoot[(z, i)] = StateDistribution(law)
        spec = SpiderWalkSpec(jumps, origin, overshoot)
        if all(c.passed for c in spec.validate()):
            return spec


def random_specs(seed: int, count: int = 20) -> list:
    """A reproducible mix of axis, membrane and spider specs."""
    rng = np.random.default_rng(seed)
    makers = (random_axis, random_membrane, random_spider)
    return [makers[k % 3](rng) for k in range(count)]
