import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from walshwalk.distributions import (
    DistributionError,
    IntDistribution,
    RngStream,
    StateDistribution,
    moments,
    sample,
    validate_1arithmetic,
    validate_centered_nondegenerate,
)


@pytest.mark.parametrize("atoms, expected", [
    ({-1: "1/2", 1: "1/2"}, (0, 1)),
    ({-1: "2/3", 2: "1/3"}, (0, 2)),
    ({0: 1}, (0, 0)),
])
def test_moments_examples(atoms, expected):
    mean, var = moments(IntDistribution(atoms))
    assert (mean, var) == expected
    assert isinstance(mean, Fraction)


def test_float_mode_tolerance():
    d = IntDistribution({-1: 0.5, 1: 0.5 + 5e-13})
    assert not d.exact
    with pytest.raises(DistributionError):
        IntDistribution({-1: 0.5, 1: 0.5 + 1e-9})


@pytest.mark.parametrize("atoms", [
    {},
    {1: "1/2", 2: "1/4"},
    {1: 0, 2: 1},
    {1: "3/2", 2: "-1/2"},
    {1.5: 1},
])
def test_invalid_laws_rejected(atoms):
    with pytest.raises(DistributionError):
        IntDistribution(atoms)


def test_duplicate_atoms_rejected():
    with pytest.raises(DistributionError):
        IntDistribution([(1, "1/2"), (1, "1/2")])


def test_centered_check_examples():
    assert validate_centered_nondegenerate(IntDistribution({-1: "1/2", 1: "1/2"})).passed
    res = validate_centered_nondegenerate(IntDistribution({-1: "1/4", 1: "3/4"}))
    assert not res.passed and "mean" in res.failures[0]
    res = validate_centered_nondegenerate(IntDistribution({0: 1}))
    assert not res.passed and "variance" in res.failures[0]


@pytest.mark.parametrize("support, expected", [([-1, 1], True), ([-2, 2], False), ([-1, 2], True)])
def test_arithmetic_examples(support, expected):
    d = IntDistribution([(v, Fraction(1, len(support))) for v in support])
    assert validate_1arithmetic(d) is expected


def _lattice_contains_one(values) -> bool:
    reach, frontier = {0}, {0}
    while frontier:
        nxt = {x + s * v for x in frontier for v in values for s in (1, -1)}
        frontier = {x for x in nxt if abs(x) <= 40} - reach
        reach |= frontier
    return 1 in reach


@given(st.sets(st.integers(-9, 9), min_size=1, max_size=5))
def test_arithmetic_matches_brute_force(values):
    d = IntDistribution([(v, Fraction(1, len(values))) for v in values])
    assert validate_1arithmetic(d) == _lattice_contains_one(values)


@settings(max_examples=10)
@given(st.lists(st.tuples(st.integers(-5, 5), st.integers(1, 9)), min_size=1, max_size=6,
                unique_by=lambda t: t[0]))
def test_moments_exact_on_rationals(pairs):
    total = sum(w for _, w in pairs)
    d = IntDistribution([(v, Fraction(w, total)) for v, w in pairs])
    mean, var = moments(d)
    ref_mean = Fraction(sum(v * w for v, w in pairs), total)
    ref_var = Fraction(sum((v - ref_mean) ** 2 * w for v, w in pairs), total)
    assert mean == ref_mean and var == ref_var


def test_point_mass_sample():
    r = RngStream(3, 1)
    assert sample(IntDistribution.point(5), r) == 5
    assert set(sample(IntDistribution.point(5), r, 10).tolist()) == {5}


def test_sample_mean_of_simple_walk():
    x = sample(IntDistribution({-1: "1/2", 1: "1/2"}), RngStream(11), 10**6)
    assert abs(x.mean()) < 4e-3


def test_sample_frequencies_within_binomial_band():
    d = IntDistribution({-2: "1/6", 0: "1/3", 3: "1/2"})
    N = 200_000
    x = sample(d, RngStream(5, 2), N)
    for v, p in d.items():
        p = float(p)
        assert abs(np.mean(x == v) - p) < 4 * math.sqrt(p * (1 - p) / N)


def test_streams_are_reproducible_and_distinct():
    a = RngStream(42, 7).random(100)
    b = RngStream(42, 7).random(100)
    c = RngStream(42, 8).random(100)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert abs(np.corrcoef(RngStream(42, 7).random(10**5), RngStream(42, 8).random(10**5))[0, 1]) < 0.02
    assert np.array_equal(RngStream(1, 2).child(3).random(5), RngStream(1, 2).child(3).random(5))


def test_json_round_trip():
    d = IntDistribution({-1: "2/3", 2: "1/3"})
    assert IntDistribution.from_json(d.to_json()) == d
    assert d.to_json() == {"atoms": [[-1, "2/3"], [2, "1/3"]]}
    s = StateDistribution({(1, 2): "1/4", (3, 1): "3/4"})
    assert StateDistribution.from_json(s.to_json()) == s
    assert s.mean_radius() == Fraction(5, 2)


def test_state_sampling_returns_pairs():
    s = StateDistribution({(1, 2): "1/4", (3, 1): "3/4"})
    draws = sample(s, RngStream(0), 1000)
    assert set(draws) <= {(1, 2), (3, 1)}
