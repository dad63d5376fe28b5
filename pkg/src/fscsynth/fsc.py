"""Finite-state controllers: product with a POMDP, execution, text/DOT IO.

A controller reads one observation per step, outputs an action, and moves to
its next node.  `gamma` and `delta` are dense (node, observation) tables;
cells that were never constrained during construction (unreachable or
don't-care situations) are filled deterministically and recorded in
`dont_care`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .model import MarkovChain, ModelError, Pomdp


class DisabledActionError(ValueError):
    """A controller chose an action that is disabled in a reachable state."""

    def __init__(self, m: Pomdp, s: int, n: int, z: int, a: int):
        self.state, self.node, self.observation, self.action = s, n, z, a
        super().__init__(
            f"controller action {m.actions[a]!r} is disabled in state "
            f"{m.states[s]!r} (observation {m.observations[z]!r}, node {n})"
        )


@dataclass(frozen=True)
class Fsc:
    """A deterministic finite-state controller.

    `gamma[n][z]` is the action played at node `n` on observation `z`;
    `delta[n][z]` the successor node.  Both tables are total.  `dont_care`
    lists cells whose value was a deterministic fill rather than a learned or
    specified choice.  Label tuples make the controller self-describing for
    export and are index-aligned with the model it was built against.
    """

    gamma: tuple[tuple[int, ...], ...]
    delta: tuple[tuple[int, ...], ...]
    init: int = 0
    dont_care: frozenset = frozenset()
    node_names: tuple[str, ...] | None = None
    obs_labels: tuple[str, ...] | None = None
    action_labels: tuple[str, ...] | None = None

    @property
    def n_nodes(self) -> int:
        return len(self.gamma)

    @property
    def n_observations(self) -> int:
        return len(self.gamma[0]) if self.gamma else 0

    def node_name(self, n: int) -> str:
        if self.node_names is not None:
            return self.node_names[n]
        return f"n{n}"

    def obs_name(self, z: int) -> str:
        if self.obs_labels is not None:
            return self.obs_labels[z]
        return f"z{z}"

    def action_name(self, a: int) -> str:
        if self.action_labels is not None:
            return self.action_labels[a]
        return f"a{a}"

    def step(self, n: int, z: int) -> tuple[int, int]:
        """(action played, next node) at node `n` on observation `z`."""
        return self.gamma[n][z], self.delta[n][z]


def default_fill_action(m: Pomdp, z: int) -> int:
    """Deterministic fill for unconstrained controller cells: the
    lowest-index action enabled in at least one state observed as `z`
    (action 0 when no state carries `z`)."""
    acts = m.enabled_somewhere_under(z)
    return acts[0] if acts else 0


def make_fsc(
    m: Pomdp,
    n_nodes: int,
    gamma: dict[tuple[int, int], int],
    delta: dict[tuple[int, int], int],
    init: int = 0,
    node_names: tuple[str, ...] | None = None,
) -> Fsc:
    """Build a total controller from partial (node, obs) maps, filling
    missing action cells with :func:`default_fill_action`, missing
    transition cells with self-loops, and recording the filled cells."""
    nz = m.n_observations
    g_rows, d_rows, dc = [], [], set()
    for n in range(n_nodes):
        g_row, d_row = [], []
        for z in range(nz):
            if (n, z) in gamma:
                g_row.append(gamma[(n, z)])
            else:
                g_row.append(default_fill_action(m, z))
                dc.add((n, z))
            d_row.append(delta.get((n, z), n))
        g_rows.append(tuple(g_row))
        d_rows.append(tuple(d_row))
    return Fsc(
        gamma=tuple(g_rows),
        delta=tuple(d_rows),
        init=init,
        dont_care=frozenset(dc),
        node_names=node_names,
        obs_labels=m.observations,
        action_labels=m.actions,
    )


# ---------------------------------------------------------------------------
# Product construction
# ---------------------------------------------------------------------------


def build_product(m: Pomdp, f: Fsc) -> MarkovChain:
    """The Markov chain induced by running `f` on `m`.

    States are reachable (pomdp state, controller node) pairs, explored by
    worklist from (init, init).  In each product state the controller reads
    the current observation, plays its action and advances its node; a
    disabled action at any reachable pair raises
    :class:`DisabledActionError` identifying (state, node, observation,
    action).
    """
    if f.n_observations != m.n_observations:
        raise ModelError(
            f"controller reads {f.n_observations} observations but the model "
            f"has {m.n_observations}"
        )
    index: dict[tuple[int, int], int] = {}
    order: list[tuple[int, int]] = []

    def intern(pair: tuple[int, int]) -> int:
        if pair not in index:
            index[pair] = len(order)
            order.append(pair)
        return index[pair]

    intern((m.init, f.init))
    rows: list[tuple[tuple[int, float], ...]] = []
    i = 0
    while i < len(order):
        s, n = order[i]
        z = m.obs[s]
        a, n2 = f.step(n, z)
        if (s, a) not in m.trans:
            raise DisabledActionError(m, s, n, z, a)
        row = tuple((intern((s2, n2)), p) for s2, p in m.trans[(s, a)])
        merged: dict[int, float] = {}
        for j, p in row:
            merged[j] = merged.get(j, 0.0) + p
        rows.append(tuple(sorted(merged.items())))
        i += 1
    labels = tuple(f"{m.states[s]}|{f.node_name(n)}" for s, n in order)
    return MarkovChain(
        labels=labels,
        rows=tuple(rows),
        init=0,
        back=tuple(order),
        pomdp=m,
    )


def bad_product_states(mc: MarkovChain, bad_obs) -> frozenset[int]:
    """Product states whose underlying POMDP state carries a bad
    observation (requires a product chain with back-map)."""
    if mc.back is None or mc.pomdp is None:
        raise ValueError("chain carries no product back-map")
    bad_obs = frozenset(bad_obs)
    return frozenset(
        i for i, (s, _n) in enumerate(mc.back) if mc.pomdp.obs[s] in bad_obs
    )


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------


def run_fsc(
    m: Pomdp,
    f: Fsc,
    steps: int,
    seed: int,
    bad: frozenset = frozenset(),
) -> tuple[list[int], bool]:
    """Sample one trajectory of `steps` transitions under the controller.

    Returns the visited POMDP states (length `steps` + 1) and a flag that is
    true iff any visited state carried a bad observation.  Deterministic for
    a fixed seed.
    """
    rng = np.random.default_rng(seed)
    s, n = m.init, f.init
    path = [s]
    hit = m.obs[s] in bad
    for _ in range(steps):
        z = m.obs[s]
        a, n = f.step(n, z)
        if (s, a) not in m.trans:
            raise DisabledActionError(m, s, n, z, a)
        succs = m.trans[(s, a)]
        u = rng.random()
        acc = 0.0
        s2 = succs[-1][0]
        for t, p in succs:
            acc += p
            if u < acc:
                s2 = t
                break
        s = s2
        path.append(s)
        hit = hit or (m.obs[s] in bad)
    return path, hit


def batch_bad_frequency(
    m: Pomdp,
    f: Fsc,
    steps: int,
    runs: int,
    seed: int,
    bad: frozenset,
) -> float:
    """Fraction of `runs` independent `steps`-step trajectories that hit a
    bad observation.  Vectorized over runs; runs that already hit bad are
    frozen (their flag cannot change)."""
    rng = np.random.default_rng(seed)
    obs_arr = np.asarray(m.obs)
    bad_mask = np.isin(obs_arr, np.asarray(sorted(bad), dtype=int)) if bad else \
        np.zeros(m.n_states, dtype=bool)
    gamma = np.asarray(f.gamma)
    delta = np.asarray(f.delta)
    cum: dict[tuple[int, int], np.ndarray] = {}
    succ: dict[tuple[int, int], np.ndarray] = {}
    for (s, a), row in m.trans.items():
        probs = np.asarray([p for _t, p in row])
        cum[(s, a)] = np.cumsum(probs)
        succ[(s, a)] = np.asarray([t for t, _p in row], dtype=int)

    state = np.full(runs, m.init, dtype=int)
    node = np.full(runs, f.init, dtype=int)
    hit = bad_mask[state].copy()
    for _ in range(steps):
        live = ~hit
        if not live.any():
            break
        z = obs_arr[state[live]]
        a = gamma[node[live], z]
        new_node = delta[node[live], z]
        new_state = state[live].copy()
        u = rng.random(live.sum())
        key = state[live] * m.n_actions + a
        for k in np.unique(key):
            grp = key == k
            s, act = divmod(int(k), m.n_actions)
            if (s, act) not in m.trans:
                zz = int(obs_arr[s])
                raise DisabledActionError(m, s, -1, zz, act)
            idx = np.searchsorted(cum[(s, act)], u[grp], side="right")
            idx = np.minimum(idx, len(succ[(s, act)]) - 1)
            new_state[grp] = succ[(s, act)][idx]
        state[live] = new_state
        node[live] = new_node
        hit[live] |= bad_mask[new_state]
    return float(hit.mean())


# ---------------------------------------------------------------------------
# Text serialization:   node obs -> action node
# ---------------------------------------------------------------------------


def serialize_fsc(f: Fsc) -> str:
    """Render a controller as text: `nodes:`/`init:` headers followed by one
    `node obs -> action node` line per (node, observation) pair."""
    lines = []
    lines.append("nodes: " + " ".join(f.node_name(n) for n in range(f.n_nodes)))
    lines.append(f"init: {f.node_name(f.init)}")
    for n in range(f.n_nodes):
        for z in range(f.n_observations):
            a, n2 = f.step(n, z)
            lines.append(
                f"{f.node_name(n)} {f.obs_name(z)} -> "
                f"{f.action_name(a)} {f.node_name(n2)}"
            )
    return "\n".join(lines) + "\n"


def parse_fsc(text: str, m: Pomdp) -> Fsc:
    """Parse controller text against a model's alphabets.

    Edge lines read `node obs -> action node`.  Pairs not listed are
    totalized deterministically (action: :func:`default_fill_action`;
    successor: self-loop) and recorded as don't-care cells, which lets a
    controller written for a base model bind to enlarged models with fresh
    observations.
    """
    node_names: list[str] = []
    init_name: str | None = None
    gamma: dict[tuple[int, int], int] = {}
    delta: dict[tuple[int, int], int] = {}
    edges: list[tuple[int, str, str, str, str]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("nodes:"):
            for tok in line[len("nodes:"):].split():
                if tok in node_names:
                    raise ModelError(f"line {lineno}: duplicate node {tok!r}")
                node_names.append(tok)
            continue
        if line.startswith("init:"):
            toks = line[len("init:"):].split()
            if len(toks) != 1:
                raise ModelError(f"line {lineno}: init needs exactly one node")
            init_name = toks[0]
            continue
        if "->" in line:
            left, _, right = line.partition("->")
            lt, rt = left.split(), right.split()
            if len(lt) != 2 or len(rt) != 2:
                raise ModelError(
                    f"line {lineno}: edge line needs `node obs -> action node`: {line!r}"
                )
            edges.append((lineno, lt[0], lt[1], rt[0], rt[1]))
            continue
        raise ModelError(f"line {lineno}: unrecognized controller line: {line!r}")
    if not node_names:
        raise ModelError("controller needs a nodes: header")
    nidx = {n: i for i, n in enumerate(node_names)}
    if init_name is not None and init_name not in nidx:
        raise ModelError(f"unknown init node {init_name!r}")
    init = nidx[init_name] if init_name is not None else 0
    for lineno, n, zname, aname, n2 in edges:
        if n not in nidx or n2 not in nidx:
            raise ModelError(f"line {lineno}: unknown node in edge {n!r} -> {n2!r}")
        if zname not in m.observations:
            raise ModelError(f"line {lineno}: unknown observation {zname!r}")
        if aname not in m.actions:
            raise ModelError(f"line {lineno}: unknown action {aname!r}")
        key = (nidx[n], m.obs_index(zname))
        if key in gamma:
            raise ModelError(f"line {lineno}: duplicate edge for {n!r} {zname!r}")
        gamma[key] = m.action_index(aname)
        delta[key] = nidx[n2]
    return make_fsc(
        m, len(node_names), gamma, delta, init=init, node_names=tuple(node_names)
    )


# ---------------------------------------------------------------------------
# DOT export / internal re-parser
# ---------------------------------------------------------------------------


def export_dot(f: Fsc) -> str:
    """GraphViz rendering: one edge per (node, observation) labeled
    `obs / action`, with the initial node marked by an entry arrow.  The
    header comments carry the exact vocabularies so the output re-parses to
    a structurally identical controller."""
    lines = ["digraph fsc {"]
    lines.append(f"  // nodes: {' '.join(f.node_name(n) for n in range(f.n_nodes))}")
    lines.append(
        f"  // observations: {' '.join(f.obs_name(z) for z in range(f.n_observations))}"
    )
    n_actions = (
        len(f.action_labels)
        if f.action_labels is not None
        else (max((max(r) for r in f.gamma), default=-1) + 1)
    )
    lines.append(f"  // actions: {' '.join(f.action_name(a) for a in range(n_actions))}")
    lines.append("  rankdir=LR;")
    lines.append('  __start [shape=point, label=""];')
    lines.append(f"  __start -> {f.node_name(f.init)};")
    for n in range(f.n_nodes):
        lines.append(f"  {f.node_name(n)} [shape=circle];")
    for n in range(f.n_nodes):
        for z in range(f.n_observations):
            a, n2 = f.step(n, z)
            lines.append(
                f'  {f.node_name(n)} -> {f.node_name(n2)} '
                f'[label="{f.obs_name(z)} / {f.action_name(a)}"];'
            )
    lines.append("}")
    return "\n".join(lines) + "\n"


_DOT_EDGE = re.compile(
    r"^\s*(\S+)\s*->\s*(\S+)\s*\[label=\"([^\"]+?)\s*/\s*([^\"]+?)\"\];\s*$"
)


def parse_dot(text: str) -> Fsc:
    """Re-parse the output of :func:`export_dot` (internal format only)."""
    nodes: list[str] = []
    obs: list[str] = []
    actions: list[str] = []
    init_name: str | None = None
    edges: list[tuple[str, str, str, str]] = []
    for raw in text.splitlines():
        line = raw.strip()
        if line.startswith("// nodes:"):
            nodes = line[len("// nodes:"):].split()
        elif line.startswith("// observations:"):
            obs = line[len("// observations:"):].split()
        elif line.startswith("// actions:"):
            actions = line[len("// actions:"):].split()
        elif line.startswith("__start ->"):
            init_name = line[len("__start ->"):].strip().rstrip(";")
        else:
            mm = _DOT_EDGE.match(line)
            if mm and mm.group(1) != "__start":
                edges.append((mm.group(1), mm.group(2), mm.group(3), mm.group(4)))
    if not nodes or not obs or not actions or init_name is None:
        raise ModelError("not an internally generated controller DOT file")
    nidx = {n: i for i, n in enumerate(nodes)}
    zidx = {z: i for i, z in enumerate(obs)}
    aidx = {a: i for i, a in enumerate(actions)}
    gamma = [[0] * len(obs) for _ in nodes]
    delta = [[0] * len(obs) for _ in nodes]
    for n, n2, zname, aname in edges:
        gamma[nidx[n]][zidx[zname]] = aidx[aname]
        delta[nidx[n]][zidx[zname]] = nidx[n2]
    return Fsc(
        gamma=tuple(tuple(r) for r in gamma),
        delta=tuple(tuple(r) for r in delta),
        init=nidx[init_name],
        node_names=tuple(nodes),
        obs_labels=tuple(obs),
        action_labels=tuple(actions),
    )
