"""Objective reductions.

Two constructions: (1) a reward wrapper that turns "avoid bad observations"
into "maximize expected discounted reward" for sampling-based planners —
entering a bad-observed state costs exactly -1 once, after which the run is
routed to an absorbing zero-reward sink; (2) an unrolling that turns a
bounded reach-avoid objective into a plain safety objective on a
step-counted copy of the model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fsc import Fsc, build_product, default_fill_action
from .model import BOUNDED_REACH_AVOID, ObjectiveSpec, Pomdp


def _fresh(name: str, taken) -> str:
    if name not in taken:
        return name
    i = 0
    while f"{name}{i}" in taken:
        i += 1
    return f"{name}{i}"


# ---------------------------------------------------------------------------
# Reward wrapper
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RewardPomdp:
    """A POMDP with a reward structure encoding bad-observation avoidance.

    `base` extends the original model with an absorbing sink `sink` carrying
    a fresh observation; every bad-observed state routes to the sink under
    every action.  Rewards are exact integers: -1 for (bad observation,
    any action) pairs, 0 elsewhere, discounted by `discount`.  A run that
    first enters a bad state at step k therefore collects exactly
    -discount**k, so 1 + expected-discounted-reward approximates the safety
    probability from below as discount approaches 1.
    """

    base: Pomdp
    bad: frozenset
    discount: float
    sink: int

    def reward(self, z: int, a: int) -> int:
        return -1 if z in self.bad else 0

    @property
    def reward_map(self) -> dict[tuple[int, int], int]:
        return {
            (z, a): self.reward(z, a)
            for z in range(self.base.n_observations)
            for a in range(self.base.n_actions)
        }


def make_reward_pomdp(m: Pomdp, bad, lam: float) -> RewardPomdp:
    """Wrap `m` for discounted planning against the bad observations."""
    bad = frozenset(bad)
    if not bad:
        raise ValueError("bad observation set must be nonempty")
    if not (0.0 < lam < 1.0):
        raise ValueError(f"discount must lie strictly between 0 and 1, got {lam}")
    qname = _fresh("sink", m.states)
    oname = _fresh("post", m.observations)
    q = m.n_states
    zq = m.n_observations
    trans: dict[tuple[int, int], tuple[tuple[int, float], ...]] = {}
    for s in range(m.n_states):
        if m.obs[s] in bad:
            for a in range(m.n_actions):
                trans[(s, a)] = ((q, 1.0),)
        else:
            for a in m.enabled(s):
                trans[(s, a)] = m.trans[(s, a)]
    for a in range(m.n_actions):
        trans[(q, a)] = ((q, 1.0),)
    base = Pomdp(
        states=m.states + (qname,),
        actions=m.actions,
        observations=m.observations + (oname,),
        trans=trans,
        init=m.init,
        obs=m.obs + (zq,),
    )
    return RewardPomdp(base=base, bad=bad, discount=lam, sink=q)


def path_reward(rm: RewardPomdp, states, actions) -> float:
    """Discounted reward of a finite trajectory: sum of
    discount**i * reward(obs(states[i]), actions[i])."""
    total = 0.0
    for i, a in enumerate(actions):
        total += (rm.discount ** i) * rm.reward(rm.base.obs[states[i]], a)
    return total


def extend_fsc_to(m: Pomdp, f: Fsc) -> Fsc:
    """Re-host a controller on a model with extra trailing observations:
    existing cells are kept, fresh-observation cells are deterministic
    fills (self-loop, default action) recorded as don't-care."""
    if f.n_observations == m.n_observations:
        return f
    if f.n_observations > m.n_observations:
        raise ValueError("controller reads more observations than the model has")
    gamma, delta, dc = [], [], set(f.dont_care)
    for n in range(f.n_nodes):
        g_row = list(f.gamma[n])
        d_row = list(f.delta[n])
        for z in range(f.n_observations, m.n_observations):
            g_row.append(default_fill_action(m, z))
            d_row.append(n)
            dc.add((n, z))
        gamma.append(tuple(g_row))
        delta.append(tuple(d_row))
    return Fsc(
        gamma=tuple(gamma),
        delta=tuple(delta),
        init=f.init,
        dont_care=frozenset(dc),
        node_names=f.node_names,
        obs_labels=m.observations,
        action_labels=m.actions,
    )


def discounted_value(rm: RewardPomdp, policy: Fsc, tol: float = 1e-9) -> float:
    """Expected discounted reward of running `policy` on the wrapped model,
    by value iteration to absolute error <= tol (sweep count from the
    discount contraction; the value span is at most 1)."""
    f = extend_fsc_to(rm.base, policy)
    mc = build_product(rm.base, f)
    n = mc.n_states
    assert mc.back is not None
    r = np.zeros(n)
    for i, (s, _node) in enumerate(mc.back):
        if rm.base.obs[s] in rm.bad:
            r[i] = -1.0
    rows_i, cols_i, probs = [], [], []
    for i, row in enumerate(mc.rows):
        for j, p in row:
            rows_i.append(i)
            cols_i.append(j)
            probs.append(p)
    ri = np.asarray(rows_i, dtype=int)
    ci = np.asarray(cols_i, dtype=int)
    pr = np.asarray(probs)
    lam = rm.discount
    sweeps = max(1, math.ceil(math.log(tol) / math.log(lam)))
    v = np.zeros(n)
    for _ in range(sweeps):
        nv = np.zeros(n)
        np.add.at(nv, ri, pr * v[ci])
        v = r + lam * nv
    return float(v[mc.init])


# ---------------------------------------------------------------------------
# Bounded reach-avoid -> safety unrolling
# ---------------------------------------------------------------------------


def unroll_reach_avoid(m: Pomdp, spec: ObjectiveSpec) -> tuple[Pomdp, frozenset]:
    """Reduce a bounded reach-avoid objective to safety.

    The output model runs `m` alongside a step counter 0..H.  Reaching a
    good observation before any bad one jumps to a fresh absorbing
    safe-observed state; seeing a bad observation, or exhausting the H
    steps without reaching good, jumps to a fresh absorbing state carrying
    a fresh bad observation.  The returned observation set (the singleton
    fresh bad observation) turns "reach good within H avoiding bad" into
    "always avoid bad" at the same threshold.  State count is exactly
    |S|*(H+1) + 2.
    """
    if spec.kind != BOUNDED_REACH_AVOID:
        raise ValueError("unrolling applies to bounded-reach-avoid objectives")
    H = spec.horizon
    assert H is not None and spec.good_observations is not None
    good = spec.good_observations
    bad = spec.bad_observations

    goal_obs_name = _fresh("reached", m.observations)
    expired_obs_name = _fresh("expired", m.observations)
    win_name = _fresh("won", m.states)
    lose_name = _fresh("lost", m.states)

    def idx(s: int, t: int) -> int:
        return t * m.n_states + s

    n_plain = m.n_states * (H + 1)
    win, lose = n_plain, n_plain + 1
    goal_z, expired_z = m.n_observations, m.n_observations + 1

    states = tuple(
        f"{m.states[s]}@{t}" for t in range(H + 1) for s in range(m.n_states)
    ) + (win_name, lose_name)
    observations = m.observations + (goal_obs_name, expired_obs_name)
    obs = tuple(m.obs[s] for _t in range(H + 1) for s in range(m.n_states)) + (
        goal_z,
        expired_z,
    )

    trans: dict[tuple[int, int], tuple[tuple[int, float], ...]] = {}
    for t in range(H + 1):
        for s in range(m.n_states):
            i = idx(s, t)
            z = m.obs[s]
            if z in good:
                for a in range(m.n_actions):
                    trans[(i, a)] = ((win, 1.0),)
            elif z in bad or t == H:
                for a in range(m.n_actions):
                    trans[(i, a)] = ((lose, 1.0),)
            else:
                for a in m.enabled(s):
                    trans[(i, a)] = tuple(
                        (idx(s2, t + 1), p) for s2, p in m.trans[(s, a)]
                    )
    for a in range(m.n_actions):
        trans[(win, a)] = ((win, 1.0),)
        trans[(lose, a)] = ((lose, 1.0),)

    unrolled = Pomdp(
        states=states,
        actions=m.actions,
        observations=observations,
        trans=trans,
        init=idx(m.init, 0),
        obs=obs,
    )
    return unrolled, frozenset({expired_z})
