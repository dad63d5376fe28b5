"""End-to-end controller synthesis: learning loop, verification gate, and
benchmark model generators."""

from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass, field

from .checker import check_threshold, enumerate_counterexample
from .fsc import Fsc, bad_product_states, build_product
from .learner import ObservationTable, init_table
from .model import (
    BOUNDED_REACH_AVOID,
    ObjectiveSpec,
    Pomdp,
    SAFETY,
    absorb_bad_states,
    parse_model,
    serialize_model,
)
from .oracles import QueryCache
from .transform import unroll_reach_avoid


@dataclass
class SynthesisReport:
    """What a synthesis run produced and what it cost."""

    outcome: str  # "fsc" | "fail" | "timeout"
    fsc: Fsc | None
    iterations: int
    oracle_queries: int
    verified_probability: float | None
    wall_time: float
    alpha: float = 0.0
    history: list[dict] = field(default_factory=list)


def _obtain_oracle(oracle, m: Pomdp, bad: frozenset[int], unrolled: bool):
    """Accept either a ready oracle instance (has best_action) or a factory
    called as factory(model, bad) — the latter is required when the model
    was rewritten for a bounded objective, since the instance would answer
    queries against the wrong state space."""
    if hasattr(oracle, "best_action"):
        if unrolled:
            raise ValueError(
                "bounded reach-avoid rewrites the model; pass an oracle factory "
                "(callable of (model, bad)) instead of a prebuilt instance"
            )
        return oracle
    return oracle(m, bad)


def synthesize(
    m: Pomdp,
    spec: ObjectiveSpec,
    oracle,
    max_iters: int = 100,
    timeout: float = 600.0,
    tol: float = 1e-10,
    final_tol: float = 1e-12,
    cache: QueryCache | None = None,
) -> SynthesisReport:
    """Learn a finite-state controller whose safety probability exceeds
    ``spec.alpha``, or report failure.

    Bounded reach-avoid objectives are first rewritten into plain safety on
    a step-indexed copy of the model.  Each iteration closes the
    observation table, extracts the hypothesis controller, and model-checks
    it on the product chain; a passing hypothesis is re-verified at
    ``final_tol`` before being returned, and a failing one yields a
    probabilistic counterexample that either refines the table or proves
    the oracle cannot tell the two apart (outcome ``fail``).  Hitting
    ``max_iters`` or ``timeout`` gives outcome ``timeout``.
    """
    t0 = time.monotonic()
    alpha = spec.alpha

    if spec.kind == BOUNDED_REACH_AVOID:
        m_work, bad = unroll_reach_avoid(m, spec)
        unrolled = True
    else:
        m_work, bad = m, frozenset(spec.bad_observations)
        unrolled = False

    ao = _obtain_oracle(oracle, m_work, bad, unrolled)
    m_norm = absorb_bad_states(m_work, bad)
    if cache is None:
        cache = QueryCache()

    table = init_table(m_norm, ao, cache, bad)
    report = SynthesisReport(
        outcome="timeout",
        fsc=None,
        iterations=0,
        oracle_queries=0,
        verified_probability=None,
        wall_time=0.0,
        alpha=alpha,
    )

    def out_of_time() -> bool:
        return time.monotonic() - t0 > timeout

    for it in range(1, max_iters + 1):
        if out_of_time():
            report.outcome = "timeout"
            break
        report.iterations = it
        table.close()
        hyp = table.build_hypothesis()
        mc = build_product(m_norm, hyp)
        bad_states = bad_product_states(mc, bad)
        res = check_threshold(mc, bad_states, alpha, tol=tol)
        event = {
            "iteration": it,
            "nodes": hyp.n_nodes,
            "probability": res.probability,
            "holds": res.holds,
        }
        report.history.append(event)
        if res.holds:
            # Tight re-verification before declaring success.
            final = check_threshold(mc, bad_states, alpha, tol=final_tol)
            event["probability"] = final.probability
            if final.holds:
                report.outcome = "fsc"
                report.fsc = hyp
                report.verified_probability = final.probability
                break
            res = final
        cex = res.counterexample
        if cex is None:
            cex = enumerate_counterexample(mc, bad_states, 1.0 - alpha)
        suffix = table.process_counterexample(cex, hyp)
        if suffix is None:
            report.outcome = "fail"
            break
        event["suffix"] = suffix
    report.oracle_queries = cache.misses
    report.wall_time = time.monotonic() - t0
    return report


# ---------------------------------------------------------------------------
# Benchmark generators
# ---------------------------------------------------------------------------


def gen_grid_world(
    n: int,
    bad_fraction: float,
    slip: float,
    seed: int,
    alpha: float = 0.5,
) -> tuple[Pomdp, ObjectiveSpec]:
    """An n-by-n grid with holes.

    Cells observe ``cell`` except holes, which observe ``hole`` (the bad
    observation).  Moves succeed with probability ``1 - slip`` and stay put
    with probability ``slip``; walking off the edge stays put.  Moving onto
    a hole traps the agent there.  The number of holes is
    ``round(bad_fraction * n*n)``, at least 1 whenever the fraction is
    positive; the start cell is drawn uniformly among non-hole cells.
    """
    if n < 2:
        raise ValueError("grid size must be at least 2")
    if not (0.0 <= bad_fraction < 1.0):
        raise ValueError("bad_fraction must be in [0, 1)")
    if not (0.0 <= slip < 1.0):
        raise ValueError("slip must be in [0, 1)")
    rng = random.Random(seed)
    cells = [(r, c) for r in range(n) for c in range(n)]
    k = round(bad_fraction * n * n)
    if bad_fraction > 0 and k == 0:
        k = 1
    holes = set(rng.sample(cells, k)) if k else set()
    safe = [rc for rc in cells if rc not in holes]
    start = rng.choice(safe)

    states = [f"r{r}c{c}" for (r, c) in cells]
    idx = {rc: i for i, rc in enumerate(cells)}
    actions = ["up", "down", "left", "right"]
    moves = {"up": (-1, 0), "down": (1, 0), "left": (0, -1), "right": (0, 1)}
    observations = ["cell", "hole"]
    obs = tuple(1 if rc in holes else 0 for rc in cells)

    trans: dict[tuple[int, int], tuple[tuple[int, float], ...]] = {}
    for rc in cells:
        s = idx[rc]
        if rc in holes:
            for ai in range(len(actions)):
                trans[(s, ai)] = ((s, 1.0),)
            continue
        r, c = rc
        for ai, a in enumerate(actions):
            dr, dc = moves[a]
            tr, tc = r + dr, c + dc
            if not (0 <= tr < n and 0 <= tc < n):
                trans[(s, ai)] = ((s, 1.0),)
                continue
            t = idx[(tr, tc)]
            if t == s:
                trans[(s, ai)] = ((s, 1.0),)
            elif slip == 0.0:
                trans[(s, ai)] = ((t, 1.0),)
            else:
                trans[(s, ai)] = ((t, 1.0 - slip), (s, slip))

    m = Pomdp(
        states=tuple(states),
        actions=tuple(actions),
        observations=tuple(observations),
        trans=trans,
        init=idx[start],
        obs=obs,
    )
    spec = ObjectiveSpec(kind=SAFETY, bad_observations=frozenset({1}), alpha=alpha)
    return m, spec


def gen_cards(
    n: int,
    variant: str = "removed",
    mode: str = "bounded",
    alpha: float = 0.5,
    horizon: int | None = None,
) -> tuple[Pomdp, ObjectiveSpec]:
    """A card-memory guessing game over ``n`` card values.

    ``variant="removed"``: one value is secretly missing from the deck;
    ``variant="added"``: one value is secretly duplicated.  ``draw``
    alternates between the (blank) table and a revealed card: from the
    table it shows a uniformly random present card, from a shown card it
    returns to the table.  ``guess_<i>`` moves to ``done`` (observation
    ``right``) when i is the hidden value and to ``lost`` (observation
    ``wrong``) otherwise.

    The objective is to reach ``right`` within the horizon while never
    observing ``wrong`` (default horizon ``2n``).  ``mode="unbounded"``
    models the forcing rule — each table draw jams with probability 0.05
    into a state (observation ``must_guess``) where only guesses remain
    enabled — and approximates the resulting unbounded game through the
    same finite-horizon objective with a larger default horizon ``4n``.
    """
    if n < 2:
        raise ValueError("need at least 2 cards")
    if variant not in ("removed", "added"):
        raise ValueError(f"unknown variant {variant!r}")
    if mode not in ("bounded", "unbounded"):
        raise ValueError(f"unknown mode {mode!r}")

    obs_names = ["blank"] + [f"card_{j}" for j in range(n)] + ["right", "wrong"]
    z_right = 1 + n
    z_wrong = 2 + n
    if mode == "unbounded":
        obs_names.append("must_guess")
        z_must = len(obs_names) - 1

    actions = ["draw"] + [f"guess_{i}" for i in range(n)]
    a_draw = 0

    def a_guess(i: int) -> int:
        return 1 + i

    # One block per hidden value i: a table state (blank) plus one state
    # per card value the block can show.
    def shown_values(i: int) -> list[int]:
        if variant == "removed":
            return [j for j in range(n) if j != i]
        return list(range(n))

    def show_prob(i: int, j: int) -> float:
        if variant == "removed":
            return 1.0 / (n - 1)
        # One value duplicated: n+1 physical cards on the table.
        return (2.0 if j == i else 1.0) / (n + 1)

    states = ["start"]
    table = {}
    view = {}
    for i in range(n):
        table[i] = len(states)
        states.append(f"table_{i}")
    for i in range(n):
        for j in shown_values(i):
            view[(i, j)] = len(states)
            states.append(f"hidden_{i}_shown_{j}")
    done = len(states)
    states.append("done")
    lost = len(states)
    states.append("lost")
    forced = {}
    if mode == "unbounded":
        for i in range(n):
            forced[i] = len(states)
            states.append(f"forced_{i}")

    obs_of = [0] * len(states)
    for (i, j), s in view.items():
        obs_of[s] = 1 + j
    obs_of[done] = z_right
    obs_of[lost] = z_wrong
    if mode == "unbounded":
        for i in range(n):
            obs_of[forced[i]] = z_must

    jam = 0.05 if mode == "unbounded" else 0.0
    trans: dict[tuple[int, int], tuple[tuple[int, float], ...]] = {}

    # start: the hidden value is fixed by the first draw.
    trans[(0, a_draw)] = tuple((table[i], 1.0 / n) for i in range(n))
    for g in range(n):
        trans[(0, a_guess(g))] = ((done, 1.0 / n), (lost, 1.0 - 1.0 / n))

    def guesses(s: int, i: int) -> None:
        for g in range(n):
            trans[(s, a_guess(g))] = ((done, 1.0),) if g == i else ((lost, 1.0),)

    for i in range(n):
        t = table[i]
        dist = [(view[(i, j)], show_prob(i, j) * (1.0 - jam)) for j in shown_values(i)]
        if jam:
            dist.append((forced[i], jam))
        trans[(t, a_draw)] = tuple(dist)
        guesses(t, i)
        for j in shown_values(i):
            s = view[(i, j)]
            trans[(s, a_draw)] = ((t, 1.0),)
            guesses(s, i)

    for term in (done, lost):
        for ai in range(len(actions)):
            trans[(term, ai)] = ((term, 1.0),)

    if mode == "unbounded":
        for i in range(n):
            # Only guessing is enabled once forced.
            guesses(forced[i], i)

    m = Pomdp(
        states=tuple(states),
        actions=tuple(actions),
        observations=tuple(obs_names),
        trans=trans,
        init=0,
        obs=tuple(obs_of),
    )
    if horizon is None:
        horizon = 2 * n if mode == "bounded" else 4 * n
    spec = ObjectiveSpec(
        kind=BOUNDED_REACH_AVOID,
        bad_observations=frozenset({z_wrong}),
        alpha=alpha,
        good_observations=frozenset({z_right}),
        horizon=horizon,
    )
    return m, spec
