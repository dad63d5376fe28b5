"""Controllers: construction, product chains, execution, serialization."""

from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fscsynth import (
    DisabledActionError,
    Fsc,
    ModelError,
    bad_product_states,
    batch_bad_frequency,
    build_product,
    export_dot,
    make_fsc,
    parse_dot,
    parse_fsc,
    parse_model,
    run_fsc,
    safety_probability,
    serialize_fsc,
)
from fscsynth.fsc import default_fill_action
from helpers import frac_reach, rand_fsc, rand_pomdp

# ---------------------------------------------------------------------------
# Construction and filling
# ---------------------------------------------------------------------------


def test_default_fill_action(grid_model):
    # Lowest-index action enabled somewhere under the observation.
    assert default_fill_action(grid_model, grid_model.obs_index("gray")) == 0


def test_make_fsc_fills_and_records(grid_model):
    m = grid_model
    gray = m.obs_index("gray")
    f = make_fsc(m, 2, {(0, gray): 2}, {(0, gray): 1})
    assert f.n_nodes == 2
    assert f.gamma[0][gray] == 2
    assert f.delta[0][gray] == 1
    # Every unspecified cell is a recorded deterministic fill + self-loop.
    for n in range(2):
        for z in range(m.n_observations):
            if (n, z) != (0, gray):
                assert (n, z) in f.dont_care
                assert f.delta[n][z] == n
                assert f.gamma[n][z] == default_fill_action(m, z)
    assert (0, gray) not in f.dont_care
    assert f.obs_labels == m.observations
    assert f.action_labels == m.actions


def test_fsc_step_and_names(safe_fsc, grid_model):
    gray = grid_model.obs_index("gray")
    a, n2 = safe_fsc.step(0, gray)
    assert grid_model.actions[a] == "right"
    assert safe_fsc.node_name(n2) == "n1"
    assert safe_fsc.obs_name(gray) == "gray"
    assert safe_fsc.action_name(a) == "right"


# ---------------------------------------------------------------------------
# Text round trip
# ---------------------------------------------------------------------------


def test_parse_fsc_bundled(safe_fsc, grid_model):
    m = grid_model
    f = safe_fsc
    assert f.n_nodes == 4
    assert f.init == 0
    gray, blue, red = m.obs_index("gray"), m.obs_index("blue"), m.obs_index("red")
    right, up, down = m.action_index("right"), m.action_index("up"), m.action_index("down")
    assert [f.gamma[n][gray] for n in range(4)] == [right, right, right, up]
    assert [f.delta[n][gray] for n in range(4)] == [1, 2, 3, 3]
    assert f.gamma[3][blue] == down and f.delta[3][blue] == 3
    # Unlisted cells were totalized and recorded.
    assert (0, red) in f.dont_care and (0, blue) in f.dont_care
    assert (3, red) in f.dont_care and (3, blue) not in f.dont_care


def test_serialize_parse_round_trip(grid_model):
    rng = random.Random(5)
    for _ in range(10):
        f = rand_fsc(rng, grid_model)
        f2 = parse_fsc(serialize_fsc(f), grid_model)
        assert f2.gamma == f.gamma
        assert f2.delta == f.delta
        assert f2.init == f.init


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("init: n0\nn0 gray -> right n0", "nodes: header"),
        ("nodes: n0 n0", "duplicate node"),
        ("nodes: n0\ninit: n9", "unknown init"),
        ("nodes: n0\nn0 gray -> right n9", "unknown node"),
        ("nodes: n0\nn0 teal -> right n0", "unknown observation"),
        ("nodes: n0\nn0 gray -> jump n0", "unknown action"),
        ("nodes: n0\nn0 gray -> right n0\nn0 gray -> up n0", "duplicate edge"),
        ("nodes: n0\nwhat is this", "unrecognized"),
        ("nodes: n0\nn0 -> right n0", "edge line needs"),
    ],
)
def test_parse_fsc_errors(grid_model, text, fragment):
    with pytest.raises(ModelError, match=fragment):
        parse_fsc(text, grid_model)


# ---------------------------------------------------------------------------
# Product chains
# ---------------------------------------------------------------------------


def test_product_structure(grid_model, safe_fsc):
    mc = build_product(grid_model, safe_fsc)
    assert mc.init == 0
    assert mc.labels[0] == "c01|n0"
    # The controller ends up bouncing between c31|n3 and c32|n3.
    li = {lab: i for i, lab in enumerate(mc.labels)}
    assert "c31|n3" in li and "c32|n3" in li
    a, b = li["c31|n3"], li["c32|n3"]
    assert dict(mc.rows[a]) == {b: 0.9, a: 0.1}  # up
    assert dict(mc.rows[b]) == {a: 0.9, b: 0.1}  # down
    # Back-map projects product states to (model state, controller node).
    assert mc.back[0] == (grid_model.init, safe_fsc.init)
    assert len(set(mc.back)) == len(mc.back)


def test_product_rejects_obs_mismatch(grid_model):
    small = Fsc(gamma=((0,),), delta=((0,),))
    with pytest.raises(ModelError, match="observations"):
        build_product(grid_model, small)


def test_product_disabled_action():
    m, _, _ = parse_model(
        """
states: s0 s1
actions: a b
observations: ok
obsfun:
  s0 ok
  s1 ok
init: s0
transitions:
  s0 a s1 1.0
  s1 b s1 1.0
"""
    )
    # Always play a: disabled in s1.
    f = Fsc(gamma=((0,), (0,)), delta=((1,), (1,)))
    with pytest.raises(DisabledActionError) as exc:
        build_product(m, f)
    assert exc.value.state == 1 and exc.value.action == 0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_product_rows_are_distributions(seed):
    rng = random.Random(seed)
    m, _bad = rand_pomdp(rng)
    f = rand_fsc(rng, m)
    mc = build_product(m, f)
    for i, row in enumerate(mc.rows):
        total = sum(p for _j, p in row)
        assert abs(total - 1.0) <= 1e-12
        assert len({j for j, _p in row}) == len(row)  # merged successors
        s, n = mc.back[i]
        assert mc.labels[i] == f"{m.states[s]}|{f.node_name(n)}"


def test_bad_product_states(grid_model, right_fsc, grid_bad):
    mc = build_product(grid_model, right_fsc)
    bs = bad_product_states(mc, grid_bad)
    for i in bs:
        assert grid_model.obs[mc.back[i][0]] in grid_bad
    for i in set(range(mc.n_states)) - bs:
        assert grid_model.obs[mc.back[i][0]] not in grid_bad


def test_bad_product_states_needs_back_map():
    from fscsynth import MarkovChain

    mc = MarkovChain(labels=("u",), rows=(((0, 1.0),),), init=0)
    with pytest.raises(ValueError, match="back-map"):
        bad_product_states(mc, frozenset({0}))


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------


def test_run_fsc_zero_steps(grid_model, safe_fsc, grid_bad):
    path, hit = run_fsc(grid_model, safe_fsc, steps=0, seed=1, bad=grid_bad)
    assert path == [grid_model.init]
    assert hit is False


def test_run_fsc_deterministic_and_valid(grid_model, safe_fsc, grid_bad):
    p1, h1 = run_fsc(grid_model, safe_fsc, steps=25, seed=42, bad=grid_bad)
    p2, h2 = run_fsc(grid_model, safe_fsc, steps=25, seed=42, bad=grid_bad)
    assert p1 == p2 and h1 == h2
    assert len(p1) == 26
    # The hit flag reflects exactly the visited observations.
    assert h1 == any(grid_model.obs[s] in grid_bad for s in p1)


def test_run_fsc_follows_positive_edges(grid_model, safe_fsc):
    path, _ = run_fsc(grid_model, safe_fsc, steps=30, seed=7)
    n = safe_fsc.init
    for s, s2 in zip(path, path[1:]):
        z = grid_model.obs[s]
        a, n = safe_fsc.step(n, z)
        assert dict(grid_model.trans[(s, a)]).get(s2, 0.0) > 0.0


def test_batch_bad_frequency_matches_exact_value(grid_model, safe_fsc, grid_bad):
    """Long-run bad frequency sits inside a 99% binomial band around the
    exact reach probability (runs are 200 steps; the tail beyond that is
    negligible for this chain)."""
    mc = build_product(grid_model, safe_fsc)
    p_bad = 1.0 - safety_probability(mc, bad_product_states(mc, grid_bad))
    runs = 20_000
    freq = batch_bad_frequency(
        grid_model, safe_fsc, steps=200, runs=runs, seed=3, bad=grid_bad
    )
    band = 2.576 * (p_bad * (1 - p_bad) / runs) ** 0.5 + 0.5 / runs
    assert abs(freq - p_bad) <= band


# ---------------------------------------------------------------------------
# DOT round trip
# ---------------------------------------------------------------------------


def test_export_dot_round_trip(grid_model, safe_fsc):
    f2 = parse_dot(export_dot(safe_fsc))
    assert f2.gamma == safe_fsc.gamma
    assert f2.delta == safe_fsc.delta
    assert f2.init == safe_fsc.init
    assert f2.node_names == tuple(safe_fsc.node_name(n) for n in range(4))
    assert f2.obs_labels == safe_fsc.obs_labels
    assert f2.action_labels == safe_fsc.action_labels


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_export_dot_round_trip_random(seed):
    rng = random.Random(seed)
    m, _bad = rand_pomdp(rng)
    f = rand_fsc(rng, m)
    f2 = parse_dot(export_dot(f))
    assert f2.gamma == f.gamma
    assert f2.delta == f.delta
    assert f2.init == f.init


def test_parse_dot_rejects_foreign_text():
    with pytest.raises(ModelError, match="DOT"):
        parse_dot("digraph g { a -> b; }")
