"""Action oracles: "which action should follow this history?"

Three interchangeable implementations — an exact finite-lookahead belief
value iteration, a sampling planner over determinized scenario trees, and a
controller-backed oracle — plus a persistent query cache and the masked
query entry point used by the learner.

All oracles are deterministic: the same (seed, history) pair always yields
the same action, and ties are always broken by lowest action index.
"""

from __future__ import annotations

from bisect import bisect_right

import numpy as np

from .fsc import Fsc
from .model import (
    History,
    InconsistentObservation,
    ModelError,
    Pomdp,
    belief_of_history,
    format_history,
    parse_history,
    validate_history,
)
from .transform import RewardPomdp


def _common_enabled(m: Pomdp, support) -> list[int]:
    """Actions enabled in every given state, ascending."""
    acts = None
    for s in support:
        en = set(m.enabled(s))
        acts = en if acts is None else acts & en
    return sorted(acts) if acts else []


# ---------------------------------------------------------------------------
# Controller-backed oracle
# ---------------------------------------------------------------------------


class FscOracle:
    """Answers queries by running a fixed controller over the history's
    observations and reporting its action at the final one."""

    def __init__(self, f: Fsc, seed: int = 0):
        self.fsc = f
        self.seed = seed

    def best_action(self, h: History) -> int:
        f = self.fsc
        n = f.init
        for z in h.obs[:-1]:
            n = f.delta[n][z]
        return f.gamma[n][h.last_obs]


def fsc_oracle_query(f: Fsc, h: History) -> int:
    return FscOracle(f).best_action(h)


# ---------------------------------------------------------------------------
# Exact belief lookahead
# ---------------------------------------------------------------------------


class BeliefViOracle:
    """Maximizes the exact probability of avoiding bad observations for the
    next `horizon` steps from the belief induced by the history.

    Internally recurses on unnormalized belief measures — the avoidance
    probability is linear in the measure, so normalization (and its
    floating-point division) is unnecessary and the argmax is unchanged.
    Results are memoized per (measure, depth).
    """

    def __init__(self, m: Pomdp, bad, horizon: int | None = None, seed: int = 0):
        self.m = m
        self.bad = frozenset(bad)
        self.horizon = 3 * m.n_states if horizon is None else horizon
        self.seed = seed
        self._memo: dict[tuple, float] = {}

    def _successor_measures(self, mu, a):
        """Split measure `mu` by taking action `a`: unnormalized successor
        measures grouped by (non-bad) observation."""
        m = self.m
        by_obs: dict[int, dict[int, float]] = {}
        for s, p in mu:
            for s2, q in m.trans[(s, a)]:
                z = m.obs[s2]
                if z in self.bad:
                    continue
                bucket = by_obs.setdefault(z, {})
                bucket[s2] = bucket.get(s2, 0.0) + p * q
        return by_obs

    def _avoid(self, mu: tuple, d: int) -> float:
        """Max over strategies of the unnormalized probability mass that
        avoids bad observations for `d` more steps, starting from measure
        `mu` (a sorted tuple of (state, weight))."""
        if d == 0:
            return sum(p for _s, p in mu)
        key = (mu, d)
        if key in self._memo:
            return self._memo[key]
        acts = _common_enabled(self.m, [s for s, _p in mu])
        best = 0.0
        for a in acts:
            total = 0.0
            for _z, nxt in sorted(self._successor_measures(mu, a).items()):
                total += self._avoid(tuple(sorted(nxt.items())), d - 1)
            if total > best:
                best = total
        self._memo[key] = best
        return best

    def _measure_of_history(self, h: History) -> tuple:
        """The unnormalized filtered measure after `h` — same support as the
        belief, but never divided, so dyadic models stay exact.  Raises like
        the normalized update on inconsistent or ill-formed histories."""
        m = self.m
        if m.obs[m.init] != h.obs[0]:
            raise InconsistentObservation(
                f"history starts with observation {m.observations[h.obs[0]]!r} "
                f"but the initial state shows {m.observations[m.obs[m.init]]!r}"
            )
        mu = {m.init: 1.0}
        for i, a in enumerate(h.acts):
            z = h.obs[i + 1]
            nxt: dict[int, float] = {}
            for s, w in mu.items():
                if a not in m.enabled(s):
                    raise ModelError(
                        f"action {m.actions[a]!r} is not enabled in state "
                        f"{m.states[s]!r} reached by the history"
                    )
                for t, p in m.trans[(s, a)]:
                    if p > 0 and m.obs[t] == z:
                        nxt[t] = nxt.get(t, 0.0) + w * p
            if not nxt:
                raise InconsistentObservation(
                    f"no state path realizes observation {m.observations[z]!r} "
                    f"at step {i + 1}"
                )
            mu = nxt
        return tuple(sorted(mu.items()))

    def best_action(self, h: History) -> int:
        mu = self._measure_of_history(h)  # raises on invalid histories
        acts = _common_enabled(self.m, [s for s, _w in mu])
        if not acts:
            raise ModelError(
                "no action is enabled in every state consistent with the history"
            )
        if self.horizon <= 0:
            return acts[0]
        best_a, best_v = acts[0], -1.0
        for a in acts:
            total = 0.0
            for _z, nxt in sorted(self._successor_measures(mu, a).items()):
                total += self._avoid(tuple(sorted(nxt.items())), self.horizon - 1)
            if total > best_v:
                best_a, best_v = a, total
        return best_a

    def avoid_value(self, h: History) -> float:
        """The optimal `horizon`-step bad-avoidance probability after `h`
        (the quantity whose argmax `best_action` returns)."""
        mu = self._measure_of_history(h)
        return self._avoid(mu, self.horizon) / sum(w for _s, w in mu)


def belief_vi_query(m: Pomdp, bad, h: History, horizon: int | None = None) -> int:
    return BeliefViOracle(m, bad, horizon).best_action(h)


# ---------------------------------------------------------------------------
# Sampling planner over determinized scenario trees
# ---------------------------------------------------------------------------


class _Node:
    __slots__ = ("depth", "scen", "L", "U", "children", "meanr", "order", "q")

    def __init__(self, depth, scen, order):
        self.depth = depth
        self.scen = scen          # list of (scenario index, state)
        self.L = 0.0
        self.U = 0.0
        self.children = None      # {action: {obs: child key}} once expanded
        self.meanr = {}           # {action: mean immediate reward}
        self.q = {}               # {action: (QL, QU)} once expanded
        self.order = order


class SparseSamplerOracle:
    """Discounted planning over a sparse tree of determinized scenarios.

    `budget` scenarios are drawn up front as fixed uniform streams (shared
    across actions, so action comparisons use common random numbers).  The
    tree is grown by repeatedly expanding the frontier node with the
    largest weight * (upper - lower) bound gap, up to `expansions` node
    expansions; every node maintains sound bounds on its depth-truncated
    value-to-go, and the answer is the root action with the best lower
    bound (lowest index on ties).

    The reward structure guarantees value-to-go in [-1, 0]: a bad state
    costs -1 once and routes to the zero-reward sink.
    """

    def __init__(
        self,
        rm: RewardPomdp,
        budget: int = 500,
        depth: int = 90,
        seed: int = 0,
        expansions: int = 64,
    ):
        if budget < 1:
            raise ValueError("budget must be at least 1")
        self.rm = rm
        self.budget = budget
        self.depth = depth
        self.seed = seed
        self.expansions = expansions
        self.last_tree: dict | None = None
        self.last_estimate: float | None = None
        self.last_root_q: dict | None = None

    # -- scenario plumbing ---------------------------------------------------

    def _draw(self, dist, u: float) -> int:
        cum = []
        acc = 0.0
        for _s, p in dist:
            acc += p
            cum.append(acc)
        return dist[min(bisect_right(cum, u), len(dist) - 1)][0]

    def _leaf_bounds(self, scen, depth):
        m = self.rm.base
        lam = self.rm.discount
        lo = hi = 0.0
        for _k, s in scen:
            if depth >= self.depth:
                continue  # beyond the truncation: contributes exactly 0
            if m.obs[s] in self.rm.bad:
                lo += -1.0
                hi += -1.0
            elif depth < self.depth - 1:
                lo += -lam
        n = len(scen)
        return lo / n, hi / n

    # -- query ---------------------------------------------------------------

    def best_action(self, h: History) -> int:
        m = self.rm.base
        lam = self.rm.discount
        b = belief_of_history(m, h)  # raises on invalid histories
        candidates = _common_enabled(m, b.keys())
        if not candidates:
            raise ModelError(
                "no action is enabled in every state consistent with the history"
            )
        rng = np.random.default_rng(self.seed)
        u_root = rng.random(self.budget)
        streams = rng.random((self.budget, self.depth + 1))
        root_dist = tuple(sorted(b.items()))
        root_scen = [(k, self._draw(root_dist, u_root[k])) for k in range(self.budget)]

        nodes: dict[tuple, _Node] = {}
        order = [0]

        def new_node(key, depth, scen):
            node = _Node(depth, scen, order[0])
            order[0] += 1
            node.L, node.U = self._leaf_bounds(scen, depth)
            nodes[key] = node
            return node

        root = new_node((), 0, root_scen)

        def node_candidates(node: _Node) -> list[int]:
            if node is root:
                return candidates
            return _common_enabled(m, {s for _k, s in node.scen})

        def expand(key) -> None:
            node = nodes[key]
            acts = node_candidates(node)
            node.children = {}
            for a in acts:
                groups: dict[int, list] = {}
                rsum = 0.0
                for k, s in node.scen:
                    rsum += self.rm.reward(m.obs[s], a)
                    s2 = self._draw(m.trans[(s, a)], streams[k, node.depth])
                    groups.setdefault(m.obs[s2], []).append((k, s2))
                node.meanr[a] = rsum / len(node.scen)
                kids = {}
                for z in sorted(groups):
                    ckey = key + (a, z)
                    new_node(ckey, node.depth + 1, groups[z])
                    kids[z] = ckey
                node.children[a] = kids
            recompute_one(key)
            while key:
                key = key[:-2]
                recompute_one(key)

        def recompute_one(key) -> None:
            node = nodes[key]
            if node.children is None:
                return
            bestL = bestU = None
            n = len(node.scen)
            for a, kids in node.children.items():
                ql = qu = node.meanr[a]
                for ckey in kids.values():
                    child = nodes[ckey]
                    w = len(child.scen) / n
                    ql += lam * w * child.L
                    qu += lam * w * child.U
                node.q[a] = (ql, qu)
                if bestL is None or ql > bestL:
                    bestL = ql
                if bestU is None or qu > bestU:
                    bestU = qu
            if bestL is not None:
                node.L, node.U = bestL, bestU

        for _ in range(self.expansions):
            frontier = [
                (kk, nn)
                for kk, nn in nodes.items()
                if nn.children is None and nn.depth < self.depth and nn.U - nn.L > 1e-12
            ]
            if not frontier or root.U - root.L <= 1e-12:
                break
            best_key = max(
                frontier,
                key=lambda kv: (
                    (len(kv[1].scen) / self.budget) * (kv[1].U - kv[1].L),
                    -kv[1].order,
                ),
            )[0]
            expand(best_key)

        self.last_tree = {
            kk: (nn.L, nn.U, nn.depth, len(nn.scen) / self.budget,
                 nn.children is not None)
            for kk, nn in nodes.items()
        }
        self.last_root_q = dict(root.q)
        if not root.q:
            self.last_estimate = root.L
            return candidates[0]
        best_a = candidates[0]
        best_l = None
        for a in candidates:
            if a in root.q and (best_l is None or root.q[a][0] > best_l):
                best_a, best_l = a, root.q[a][0]
        self.last_estimate = root.L
        return best_a


def sparse_sampler_query(
    rm: RewardPomdp, h: History, budget: int = 500, depth: int = 90, seed: int = 0
) -> int:
    return SparseSamplerOracle(rm, budget=budget, depth=depth, seed=seed).best_action(h)


# ---------------------------------------------------------------------------
# Composite oracle
# ---------------------------------------------------------------------------


class CompositeOracle:
    """Exact lookahead while the belief support stays small, sampling
    beyond: queries whose folded belief support exceeds `support_cap`
    states are delegated to the sampler."""

    def __init__(
        self,
        belief_vi: BeliefViOracle,
        sampler: SparseSamplerOracle,
        support_cap: int = 32,
    ):
        self.belief_vi = belief_vi
        self.sampler = sampler
        self.support_cap = support_cap
        self.seed = sampler.seed

    def best_action(self, h: History) -> int:
        b = belief_of_history(self.belief_vi.m, h)
        if len(b) > self.support_cap:
            return self.sampler.best_action(h)
        return self.belief_vi.best_action(h)


# ---------------------------------------------------------------------------
# Query cache + masked query entry point
# ---------------------------------------------------------------------------


class QueryCache:
    """Replayable map from full histories to oracle answers.

    `misses` counts real oracle invocations routed through
    :func:`answer_action_query` — the measure of oracle cost.  The optional
    text form is one record per line, `obs act obs ... obs -> action`, with
    symbols as named in the model file.
    """

    def __init__(self):
        self.data: dict[History, int] = {}
        self.misses = 0
        self.dirty = False

    def __contains__(self, h: History) -> bool:
        return h in self.data

    def get(self, h: History) -> int | None:
        return self.data.get(h)

    def put(self, h: History, a: int) -> None:
        self.data[h] = a
        self.dirty = True

    def save(self, path: str, m: Pomdp) -> None:
        lines = [
            f"{format_history(m, h)} -> {m.actions[a]}"
            for h, a in self.data.items()
        ]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + ("\n" if lines else ""))
        self.dirty = False

    @classmethod
    def load(cls, path: str, m: Pomdp) -> "QueryCache":
        cache = cls()
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line:
                    continue
                left, sep, right = line.rpartition("->")
                if not sep:
                    raise ModelError(f"line {lineno}: cache line without '->': {line!r}")
                h = parse_history(m, left.strip())
                cache.data[h] = m.action_index(right.strip())
        cache.dirty = False
        return cache


def answer_action_query(
    ao, cache: QueryCache, m: Pomdp, h: History, bad: frozenset = frozenset()
) -> int | None:
    """The learner's query: the oracle's action after `h`, or None
    (don't-care) when no meaningful answer exists.

    Don't-care covers histories no execution can produce (invalid under
    forward subset propagation) and histories that have already shown a bad
    observation — such a run is past saving, so the controller's behavior
    there cannot affect the objective.  Valid, bad-free queries are served
    from the cache when possible; fresh answers are cached.  Callers build
    histories incrementally (prefix before extension), so every answered
    prefix of a cached history is itself cached.
    """
    if any(z in bad for z in h.obs):
        return None
    if not validate_history(m, h):
        return None
    if h in cache:
        return cache.get(h)
    a = ao.best_action(h)
    cache.put(h, a)
    cache.misses += 1
    return a
