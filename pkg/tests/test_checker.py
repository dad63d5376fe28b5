"""Chain analysis: exact reachability, threshold checks, counterexamples."""

from __future__ import annotations

import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fscsynth import (
    InfeasibleCounterexample,
    MarkovChain,
    check_threshold,
    enumerate_counterexample,
    path_probability,
    reach_probability,
    safety_probability,
    serialize_counterexample,
)
from helpers import brute_bad_paths, frac_reach, rand_mc

# A chain with two bad-hitting paths: init -> bad (0.5) and
# init -> mid -> bad (0.25); the rest escapes to a safe absorber.
TWO_PATH = MarkovChain(
    labels=("init", "bad", "mid", "safe"),
    rows=(
        ((1, 0.5), (2, 0.5)),
        ((1, 1.0),),
        ((1, 0.5), (3, 0.5)),
        ((3, 1.0),),
    ),
    init=0,
)


# ---------------------------------------------------------------------------
# Reachability values
# ---------------------------------------------------------------------------


def test_reach_hand_values():
    assert reach_probability(TWO_PATH, {1}) == 0.75
    assert safety_probability(TWO_PATH, {1}) == 0.25


def test_reach_certain_is_exactly_one():
    """A transient self-loop that leaks into bad eventually hits it almost
    surely; graph precomputation must return exactly 1.0, not a value-
    iteration approximation."""
    mc = MarkovChain(
        labels=("loop", "bad"),
        rows=(((0, 0.9), (1, 0.1)), ((1, 1.0),)),
        init=0,
    )
    assert reach_probability(mc, {1}) == 1.0


def test_reach_impossible_is_exactly_zero():
    mc = MarkovChain(
        labels=("a", "b", "unreachable"),
        rows=(((1, 1.0),), ((0, 1.0),), ((2, 1.0),)),
        init=0,
    )
    assert reach_probability(mc, {2}) == 0.0
    assert safety_probability(mc, {2}) == 1.0


def test_reach_initial_state_bad():
    assert reach_probability(TWO_PATH, {0}) == 1.0


def test_reach_accepts_predicate():
    assert reach_probability(TWO_PATH, lambda i: i == 1) == 0.75


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_reach_matches_rational_solve(seed):
    """Value iteration with graph precomputation agrees with an exact
    Fraction linear solve on small random chains."""
    rng = random.Random(seed)
    mc, bad = rand_mc(rng, max_states=10)
    v = reach_probability(mc, bad)
    ref = float(frac_reach(mc, bad))
    assert abs(v - ref) <= 1e-9
    assert abs(safety_probability(mc, bad) + v - 1.0) <= 2e-10


# ---------------------------------------------------------------------------
# Counterexamples
# ---------------------------------------------------------------------------


def test_counterexample_hand_case():
    cex = enumerate_counterexample(TWO_PATH, {1}, mass=0.6)
    assert cex.paths == ((0, 1), (0, 2, 1))
    assert cex.probs == (0.5, 0.25)
    assert cex.total == 0.75
    assert cex.total > 0.6


def test_counterexample_stops_at_mass():
    cex = enumerate_counterexample(TWO_PATH, {1}, mass=0.4)
    assert cex.paths == ((0, 1),)
    assert cex.total == 0.5


def test_counterexample_truncates_at_first_bad():
    # bad has a self-loop, but no emitted path may continue through it.
    cex = enumerate_counterexample(TWO_PATH, {1}, mass=0.6)
    for path in cex.paths:
        assert path[-1] == 1
        assert all(s != 1 for s in path[:-1])


def test_counterexample_infeasible_mass():
    with pytest.raises(InfeasibleCounterexample):
        enumerate_counterexample(TWO_PATH, {1}, mass=0.75)
    with pytest.raises(InfeasibleCounterexample):
        enumerate_counterexample(TWO_PATH, {1}, mass=0.9)


def _check_counterexample_shape(mc, bad, cex, mass):
    # Nonincreasing probabilities, each matching its path exactly.
    for path, p in zip(cex.paths, cex.probs):
        assert path[0] == mc.init
        assert path[-1] in bad
        assert all(s not in bad for s in path[:-1])
        assert abs(path_probability(mc, path) - p) <= 1e-14
    assert all(a >= b for a, b in zip(cex.probs, cex.probs[1:]))
    # No path is a prefix of another: the cylinders are disjoint.  In
    # lexicographic order a prefix sits immediately before one of its own
    # extensions, so checking neighbours covers every pair.
    ordered = sorted(cex.paths)
    for p1, p2 in zip(ordered, ordered[1:]):
        assert p2[: len(p1)] != p1
    assert cex.total > mass
    assert abs(cex.total - sum(cex.probs)) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_counterexample_structure_random(seed):
    rng = random.Random(seed)
    mc, bad = rand_mc(rng, max_states=12)
    reach = reach_probability(mc, bad)
    if reach <= 1e-9:
        return
    mass = reach / 2
    try:
        cex = enumerate_counterexample(mc, bad, mass=mass, max_paths=20_000)
    except RuntimeError:
        # The bad mass is spread over too many low-probability paths for a
        # compact witness; nothing to check on this instance.
        return
    _check_counterexample_shape(mc, bad, cex, mass)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_counterexample_matches_exhaustive_enumeration(seed):
    """On small chains, every emitted path appears in the exhaustive
    first-bad-truncated enumeration with exactly its probability."""
    rng = random.Random(seed)
    mc, bad = rand_mc(rng, max_states=8)
    reach = reach_probability(mc, bad)
    if reach <= 1e-9:
        return
    try:
        cex = enumerate_counterexample(mc, bad, mass=reach / 2, max_paths=20_000)
    except RuntimeError:
        return
    brute = brute_bad_paths(mc, bad, max_len=12)
    if brute is None:
        return
    table = dict(brute)
    for path, p in zip(cex.paths, cex.probs):
        if len(path) <= 12:
            assert path in table
            assert abs(p - float(table[path])) <= 1e-12


def test_serialize_counterexample():
    cex = enumerate_counterexample(TWO_PATH, {1}, mass=0.6)
    text = serialize_counterexample(cex)
    lines = text.strip().split("\n")
    assert lines[0].startswith("total 0.75 over 2 paths")
    assert "init" in lines[1] and "bad" in lines[1]
    assert "p=0.5" in lines[1]


# ---------------------------------------------------------------------------
# Threshold checks
# ---------------------------------------------------------------------------


def test_check_threshold_holds():
    res = check_threshold(TWO_PATH, {1}, alpha=0.2)
    assert res.holds
    assert res.probability == 0.25
    assert res.counterexample is None


def test_check_threshold_violated_carries_counterexample():
    res = check_threshold(TWO_PATH, {1}, alpha=0.5)
    assert not res.holds
    assert res.probability == 0.25
    assert res.counterexample is not None
    assert res.counterexample.total > 1.0 - 0.5


def test_check_threshold_at_exact_equality():
    # The comparison is strict, so probability == alpha is a violation; at
    # exact equality no finite path set can strictly exceed the
    # complementary mass, which surfaces as an infeasibility error.
    with pytest.raises(InfeasibleCounterexample):
        check_threshold(TWO_PATH, {1}, alpha=0.25)


def test_check_threshold_alpha_validation():
    with pytest.raises(ValueError, match="alpha"):
        check_threshold(TWO_PATH, {1}, alpha=1.0)
