"""Independent reference implementations and random-instance generators.

Everything here deliberately uses a different formulation from the package
code: exact Fraction arithmetic, normalized beliefs, Gaussian elimination,
and exhaustive enumeration — so agreement between the two is evidence, not
tautology.
"""

from __future__ import annotations

import random
from fractions import Fraction

from fscsynth import Fsc, MarkovChain, Pomdp

# ---------------------------------------------------------------------------
# Exact reachability on a Markov chain (Gaussian elimination over Fractions)
# ---------------------------------------------------------------------------


def frac_reach(mc: MarkovChain, bad) -> Fraction:
    """Pr(eventually reach `bad` from the initial state), exactly."""
    bad = set(bad)
    n = mc.n_states
    preds: dict[int, set[int]] = {s: set() for s in range(n)}
    for s in range(n):
        for t, p in mc.rows[s]:
            if p > 0:
                preds[t].add(s)
    # States that can reach bad.
    can = set(bad)
    work = list(bad)
    while work:
        t = work.pop()
        for s in preds[t]:
            if s not in can:
                can.add(s)
                work.append(s)
    if mc.init in bad:
        return Fraction(1)
    if mc.init not in can:
        return Fraction(0)
    transient = sorted(s for s in can if s not in bad)
    index = {s: i for i, s in enumerate(transient)}
    k = len(transient)
    # x_s = sum_t P(s,t) x_t + sum_{t in bad} P(s,t)
    a = [[Fraction(0)] * k for _ in range(k)]
    b = [Fraction(0)] * k
    for s in transient:
        i = index[s]
        a[i][i] += 1
        for t, p in mc.rows[s]:
            fp = Fraction(p)
            if t in bad:
                b[i] += fp
            elif t in index:
                a[i][index[t]] -= fp
            # successors that cannot reach bad contribute 0
    x = _solve(a, b)
    return x[index[mc.init]]


def frac_safety(mc: MarkovChain, bad) -> Fraction:
    return 1 - frac_reach(mc, bad)


def _solve(a, b):
    """Gaussian elimination with partial (first-nonzero) pivoting, exact."""
    n = len(b)
    a = [row[:] for row in a]
    b = b[:]
    for col in range(n):
        piv = next(r for r in range(col, n) if a[r][col] != 0)
        a[col], a[piv] = a[piv], a[col]
        b[col], b[piv] = b[piv], b[col]
        inv = Fraction(1) / a[col][col]
        a[col] = [v * inv for v in a[col]]
        b[col] *= inv
        for r in range(n):
            if r != col and a[r][col] != 0:
                f = a[r][col]
                a[r] = [vr - f * vc for vr, vc in zip(a[r], a[col])]
                b[r] -= f * b[col]
    return b


# ---------------------------------------------------------------------------
# Exact finite-horizon avoidance via normalized-belief recursion
# ---------------------------------------------------------------------------


def frac_belief(m: Pomdp, h) -> dict[int, Fraction] | None:
    """Normalized Fraction belief after history h; None if inconsistent."""
    if m.obs[m.init] != h.obs[0]:
        return None
    b = {m.init: Fraction(1)}
    for i, a in enumerate(h.acts):
        z = h.obs[i + 1]
        nxt: dict[int, Fraction] = {}
        for s, w in b.items():
            if a not in m.enabled(s):
                return None
            for t, p in m.trans[(s, a)]:
                if p > 0 and m.obs[t] == z:
                    nxt[t] = nxt.get(t, Fraction(0)) + w * Fraction(p)
        total = sum(nxt.values())
        if total == 0:
            return None
        b = {s: w / total for s, w in nxt.items()}
    return b


def brute_avoid(m: Pomdp, bad, belief: dict[int, Fraction], horizon: int) -> Fraction:
    """Max probability of seeing no bad observation in the next `horizon`
    steps, by exhaustive recursion over normalized beliefs."""
    bad = frozenset(bad)

    def val(b: tuple, d: int) -> Fraction:
        if d == 0:
            return Fraction(1)
        bd = dict(b)
        cands = [a for a in range(m.n_actions)
                 if all(a in m.enabled(s) for s in bd)]
        if not cands:
            return Fraction(0)  # mirrors the oracle: no joint action counts as loss
        best = Fraction(0)
        for a in cands:
            by_obs: dict[int, dict[int, Fraction]] = {}
            for s, w in bd.items():
                for t, p in m.trans[(s, a)]:
                    if p > 0:
                        z = m.obs[t]
                        by_obs.setdefault(z, {})[t] = (
                            by_obs.get(z, {}).get(t, Fraction(0)) + w * Fraction(p)
                        )
            total = Fraction(0)
            for z, dist in by_obs.items():
                mass = sum(dist.values())
                if z in bad:
                    continue  # that branch is lost
                norm = tuple(sorted((s, w / mass) for s, w in dist.items()))
                total += mass * val(norm, d - 1)
            if total > best:
                best = total
        return best

    start = tuple(sorted(belief.items()))
    return val(start, horizon)


def brute_best_action(m: Pomdp, bad, h, horizon: int) -> int | None:
    """Argmax action by exhaustive lookahead; ties to the lowest index.
    None when the history is inconsistent."""
    bad = frozenset(bad)
    b = frac_belief(m, h)
    if b is None:
        return None
    cands = [a for a in range(m.n_actions) if all(a in m.enabled(s) for s in b)]
    if not cands:
        return None
    best_a, best_v = cands[0], Fraction(-1)
    for a in cands:
        by_obs: dict[int, dict[int, Fraction]] = {}
        for s, w in b.items():
            for t, p in m.trans[(s, a)]:
                if p > 0:
                    z = m.obs[t]
                    by_obs.setdefault(z, {})[t] = (
                        by_obs.get(z, {}).get(t, Fraction(0)) + w * Fraction(p)
                    )
        total = Fraction(0)
        for z, dist in by_obs.items():
            if z in bad:
                continue
            mass = sum(dist.values())
            norm = {s: w / mass for s, w in dist.items()}
            total += mass * brute_avoid(m, bad, norm, horizon - 1)
        if total > best_v:
            best_a, best_v = a, total
    return best_a


# ---------------------------------------------------------------------------
# Exhaustive path enumeration on a Markov chain
# ---------------------------------------------------------------------------


def brute_bad_paths(mc: MarkovChain, bad, max_len: int, limit: int = 300_000):
    """All paths from init that hit `bad` for the first time at their last
    state, with length ≤ max_len states, as (path, Fraction prob) pairs.
    Returns None when the enumeration would visit more than `limit` nodes
    (the instance is too branchy for an exhaustive cross-check)."""
    bad = set(bad)
    out = []
    visited = [0]

    def walk(path, prob):
        visited[0] += 1
        if visited[0] > limit:
            raise RecursionError("budget")
        s = path[-1]
        if s in bad:
            out.append((tuple(path), prob))
            return
        if len(path) >= max_len:
            return
        for t, p in mc.rows[s]:
            if p > 0:
                walk(path + [t], prob * Fraction(p))

    try:
        walk([mc.init], Fraction(1))
    except RecursionError:
        return None
    return out


# ---------------------------------------------------------------------------
# Random dyadic instances
# ---------------------------------------------------------------------------


def dyadic_dist(rng: random.Random, support, grain: int = 16):
    """Random distribution over `support` with probabilities k/grain (grain
    a power of two), exactly representable in binary floating point."""
    support = list(support)
    units = [0] * len(support)
    for _ in range(grain):
        units[rng.randrange(len(support))] += 1
    return tuple(
        (s, u / grain) for s, u in zip(support, units) if u
    )


def rand_pomdp(
    rng: random.Random,
    max_states: int = 8,
    n_actions: int | None = None,
    n_obs: int | None = None,
    grain: int = 16,
) -> tuple[Pomdp, frozenset[int]]:
    """Random all-actions-enabled POMDP with dyadic transitions; returns the
    model and a one-observation bad set never carried by the initial state."""
    ns = rng.randint(2, max_states)
    na = n_actions or rng.randint(2, 3)
    nz = n_obs or rng.randint(2, 3)
    bad_z = nz - 1
    obs = [rng.randrange(nz) for _ in range(ns)]
    init = 0
    if obs[init] == bad_z:
        obs[init] = rng.randrange(nz - 1)
    if not any(z == bad_z for z in obs):
        obs[rng.randrange(ns - 1) + 1] = bad_z
    trans = {}
    for s in range(ns):
        for a in range(na):
            # Narrow supports keep beliefs small and structure interesting.
            k = rng.randint(1, min(3, ns))
            support = rng.sample(range(ns), k)
            trans[(s, a)] = dyadic_dist(rng, support, grain)
    m = Pomdp(
        states=tuple(f"s{i}" for i in range(ns)),
        actions=tuple(f"a{i}" for i in range(na)),
        observations=tuple(f"z{i}" for i in range(nz)),
        trans=trans,
        init=init,
        obs=tuple(obs),
    )
    return m, frozenset({bad_z})


def rand_fsc(rng: random.Random, m: Pomdp, max_nodes: int = 4) -> Fsc:
    """Random total controller for a model where every action is enabled
    everywhere."""
    k = rng.randint(1, max_nodes)
    gamma = tuple(
        tuple(rng.randrange(m.n_actions) for _ in range(m.n_observations))
        for _ in range(k)
    )
    delta = tuple(
        tuple(rng.randrange(k) for _ in range(m.n_observations))
        for _ in range(k)
    )
    return Fsc(gamma=gamma, delta=delta, init=0,
               obs_labels=m.observations, action_labels=m.actions)


def rand_mc(
    rng: random.Random, max_states: int = 30, grain: int = 16
) -> tuple[MarkovChain, frozenset[int]]:
    """Random Markov chain with dyadic rows plus a nonempty bad set not
    containing the initial state."""
    ns = rng.randint(3, max_states)
    rows = []
    for s in range(ns):
        k = rng.randint(1, min(4, ns))
        support = rng.sample(range(ns), k)
        rows.append(dyadic_dist(rng, support, grain))
    n_bad = rng.randint(1, max(1, ns // 5))
    bad = set(rng.sample(range(1, ns), n_bad))
    mc = MarkovChain(
        labels=tuple(f"m{i}" for i in range(ns)),
        rows=tuple(rows),
        init=0,
    )
    return mc, frozenset(bad)
