"""Markov-chain model checking: exact safety probabilities and
probability-ranked counterexamples.

Reachability values are computed by graph precomputation of the certain
(probability-1) and impossible (probability-0) states followed by value
iteration on the remaining transient fragment, so comparisons against 0 and
1 are exact.  Counterexamples are finite path sets whose cylinders are
pairwise disjoint, enumerated lazily in nonincreasing probability order.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .model import MarkovChain


class InfeasibleCounterexample(ValueError):
    """Requested counterexample mass is not reachable in this chain."""


def _bad_frozenset(mc: MarkovChain, bad) -> frozenset[int]:
    """Normalize a bad-state description (iterable of indices or a
    predicate over state indices) to a frozenset of state indices."""
    if callable(bad):
        return frozenset(i for i in range(mc.n_states) if bad(i))
    return frozenset(bad)


def _predecessors(mc: MarkovChain) -> list[list[int]]:
    pred: list[list[int]] = [[] for _ in range(mc.n_states)]
    for i, row in enumerate(mc.rows):
        for j, p in row:
            if p > 0.0:
                pred[j].append(i)
    return pred


def _backward_reach(mc: MarkovChain, targets, frozen=frozenset()) -> set[int]:
    """States with a positive-probability path to `targets`; exploration
    does not continue backwards through `frozen` states (used to treat the
    target set as absorbing)."""
    pred = _predecessors(mc)
    seen = set(targets)
    stack = list(targets)
    while stack:
        j = stack.pop()
        for i in pred[j]:
            if i not in seen and i not in frozen:
                seen.add(i)
                stack.append(i)
    return seen


def reach_probability(mc: MarkovChain, bad, tol: float = 1e-10) -> float:
    """Probability of ever visiting a bad state from the initial state."""
    B = _bad_frozenset(mc, bad)
    if mc.init in B:
        return 1.0
    can_reach = _backward_reach(mc, B)
    if mc.init not in can_reach:
        return 0.0
    # Probability-0 set: states with no path to B.  Probability-1 set:
    # states that cannot avoid B, i.e. have no path to the probability-0
    # set once B is made absorbing.
    prob0 = set(range(mc.n_states)) - can_reach
    reach_prob0 = _backward_reach(mc, prob0, frozen=B)
    prob1 = set(range(mc.n_states)) - reach_prob0 - prob0
    # B subset of prob1 by construction (no escape from an absorbing view).
    transient = sorted(set(range(mc.n_states)) - prob0 - prob1)
    if mc.init in prob1:
        return 1.0
    t_index = {s: k for k, s in enumerate(transient)}
    rows_i, cols_i, probs = [], [], []
    const = np.zeros(len(transient))
    for s in transient:
        k = t_index[s]
        for j, p in mc.rows[s]:
            if j in prob1:
                const[k] += p
            elif j in t_index:
                rows_i.append(k)
                cols_i.append(t_index[j])
                probs.append(p)
    ri = np.asarray(rows_i, dtype=int)
    ci = np.asarray(cols_i, dtype=int)
    pr = np.asarray(probs)
    x = np.zeros(len(transient))
    stop = tol * 1e-3
    for _ in range(1_000_000):
        nx = const.copy()
        np.add.at(nx, ri, pr * x[ci])
        change = float(np.max(np.abs(nx - x))) if len(x) else 0.0
        x = nx
        if change <= stop:
            break
    else:
        raise RuntimeError("reachability value iteration did not converge")
    return float(x[t_index[mc.init]])


def safety_probability(mc: MarkovChain, bad, tol: float = 1e-10) -> float:
    """Probability of never visiting a bad state: 1 - reach probability."""
    return 1.0 - reach_probability(mc, bad, tol)


# ---------------------------------------------------------------------------
# Counterexamples
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Counterexample:
    """A finite set of finite paths witnessing a safety violation.

    Each path starts at the initial state and ends at its first bad state;
    no path is a prefix of another, so the cylinder sets are pairwise
    disjoint and `total` is exactly the probability of their union.  Paths
    are listed in nonincreasing probability order.  `mc` is the chain the
    paths live in (carrying back-maps when it is a product).
    """

    paths: tuple[tuple[int, ...], ...]
    probs: tuple[float, ...]
    total: float
    mc: MarkovChain


def enumerate_counterexample(
    mc: MarkovChain, bad, mass: float, max_paths: int = 10**6
) -> Counterexample:
    """Enumerate bad-hitting paths best-first until their cumulative
    probability strictly exceeds `mass`.

    Lazy Dijkstra-style search over the prefix tree of paths: the frontier
    is a priority queue keyed by path probability (ties: shorter path
    first, then lexicographic), paths are truncated at their first bad
    state, and extension only proceeds into states that can still reach a
    bad state.  Raises :class:`InfeasibleCounterexample` when the total
    reachable bad mass does not exceed `mass`, and :class:`RuntimeError`
    when more than `max_paths` path prefixes are visited before the mass
    is covered (chains that spread the bad mass over very many low-
    probability paths admit no compact path-based witness).
    """
    B = _bad_frozenset(mc, bad)
    reach = reach_probability(mc, B)
    if reach <= mass:
        raise InfeasibleCounterexample(
            f"requested mass {mass} but the reachable bad mass is {reach}"
        )
    can_reach = _backward_reach(mc, B)
    heap: list[tuple[float, int, tuple[int, ...]]] = []
    if mc.init in can_reach:
        heapq.heappush(heap, (-1.0, 1, (mc.init,)))
    paths: list[tuple[int, ...]] = []
    probs: list[float] = []
    total = 0.0
    visited = 0
    while heap:
        negp, _length, path = heapq.heappop(heap)
        visited += 1
        if visited > max_paths:
            raise RuntimeError(
                f"counterexample enumeration visited more than {max_paths} "
                f"path prefixes (accumulated {total} of requested {mass})"
            )
        p = -negp
        end = path[-1]
        if end in B:
            paths.append(path)
            probs.append(p)
            total += p
            if total > mass:
                return Counterexample(tuple(paths), tuple(probs), total, mc)
            continue
        for j, q in mc.rows[end]:
            if q > 0.0 and j in can_reach:
                heapq.heappush(heap, (-(p * q), len(path) + 1, path + (j,)))
    raise RuntimeError(
        f"path enumeration exhausted at mass {total} <= requested {mass}; "
        f"the reachable bad mass {reach} is not attainable by finite paths "
        f"within tolerance"
    )


def serialize_counterexample(cex: Counterexample) -> str:
    """One path per line: probability, then states alternating with the
    edge probabilities between them; product chains append the projected
    observation trace."""
    mc = cex.mc
    lines = [f"total {cex.total!r} over {len(cex.paths)} paths"]
    for path, p in zip(cex.paths, cex.probs):
        bits = [mc.labels[path[0]]]
        for a, b in zip(path, path[1:]):
            edge = dict(mc.rows[a]).get(b, 0.0)
            bits.append(f"{edge!r}")
            bits.append(mc.labels[b])
        line = f"p={p!r}: " + " ".join(bits)
        if mc.back is not None and mc.pomdp is not None:
            m = mc.pomdp
            trace = " ".join(m.observations[m.obs[mc.back[i][0]]] for i in path)
            line += f" | obs: {trace}"
        lines.append(line)
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class CheckResult:
    """Outcome of a threshold check: the verdict, the computed safety
    probability, and a counterexample when the threshold is missed."""

    holds: bool
    probability: float
    counterexample: Counterexample | None


def check_threshold(
    mc: MarkovChain, bad, alpha: float, tol: float = 1e-10
) -> CheckResult:
    """Does Pr(always avoid bad) exceed `alpha` on this chain?

    On failure the result carries a counterexample whose cumulative
    probability strictly exceeds 1 - alpha.
    """
    if not (0.0 <= alpha < 1.0):
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
    prob = safety_probability(mc, bad, tol)
    if prob > alpha:
        return CheckResult(True, prob, None)
    cex = enumerate_counterexample(mc, bad, mass=1.0 - alpha)
    return CheckResult(False, prob, cex)
