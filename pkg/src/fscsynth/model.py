"""Core domain types: POMDPs, Markov chains, histories, beliefs, objectives.

Everything is index-based internally (states, actions and observations are
small integers); the string names given in model files are kept around for
parsing, serialization and error messages.  All types are immutable after
construction and all operations are pure functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence


class ModelError(ValueError):
    """Raised for malformed model files or inconsistent model data."""


class InconsistentObservation(ValueError):
    """Raised when a belief update conditions on an impossible observation."""


# ---------------------------------------------------------------------------
# POMDP
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Pomdp:
    """A POMDP with deterministic, state-based observations.

    `trans` is a partial map: `(state, action) -> ((successor, prob), ...)`;
    an absent key means the action is disabled in that state.  `obs` assigns
    every state exactly one observation index.  The initial state is `init`.
    """

    states: tuple[str, ...]
    actions: tuple[str, ...]
    observations: tuple[str, ...]
    trans: Mapping[tuple[int, int], tuple[tuple[int, float], ...]]
    init: int
    obs: tuple[int, ...]

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def n_observations(self) -> int:
        return len(self.observations)

    def enabled(self, s: int) -> tuple[int, ...]:
        """Actions enabled in state `s`, in index order."""
        return tuple(a for a in range(len(self.actions)) if (s, a) in self.trans)

    def states_with_obs(self, z: int) -> tuple[int, ...]:
        """All states carrying observation `z`, in index order."""
        return tuple(s for s in range(len(self.states)) if self.obs[s] == z)

    def enabled_somewhere_under(self, z: int) -> tuple[int, ...]:
        """Actions enabled in at least one state observed as `z`."""
        out = []
        for a in range(len(self.actions)):
            if any((s, a) in self.trans for s in self.states_with_obs(z)):
                out.append(a)
        return tuple(out)

    def successors(self, s: int, a: int) -> tuple[tuple[int, float], ...]:
        return self.trans[(s, a)]

    def state_index(self, name: str) -> int:
        return self.states.index(name)

    def action_index(self, name: str) -> int:
        return self.actions.index(name)

    def obs_index(self, name: str) -> int:
        return self.observations.index(name)


# ---------------------------------------------------------------------------
# Markov chain
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MarkovChain:
    """A finite Markov chain.

    `labels` are human-readable state names.  `rows[i]` lists the outgoing
    edges of state `i` as `(successor, prob)` pairs; missing edges have
    probability zero.  Product chains built from a POMDP and a controller
    additionally carry `back` (product state -> (pomdp state, controller
    node)) and a reference to the POMDP, so later stages can project paths
    back to observations.
    """

    labels: tuple[str, ...]
    rows: tuple[tuple[tuple[int, float], ...], ...]
    init: int
    back: tuple[tuple[int, int], ...] | None = None
    pomdp: Pomdp | None = field(default=None, repr=False)

    @property
    def n_states(self) -> int:
        return len(self.rows)


def path_probability(mc: MarkovChain, path: Sequence[int]) -> float:
    """Probability of a finite state sequence: the product of its edge
    probabilities.  A single-state (length-0) path has probability 1."""
    p = 1.0
    for i in range(len(path) - 1):
        edge = dict(mc.rows[path[i]]).get(path[i + 1], 0.0)
        p *= edge
        if p == 0.0:
            return 0.0
    return p


# ---------------------------------------------------------------------------
# Histories
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class History:
    """An observation/action history `z0 a1 z1 ... a_k z_k`.

    Histories start and end with an observation; the empty history of a model
    is the single initial observation.  `obs` therefore always has exactly
    one more element than `acts`.
    """

    obs: tuple[int, ...]
    acts: tuple[int, ...]

    def __post_init__(self):
        if len(self.obs) != len(self.acts) + 1:
            raise ValueError(
                f"history needs exactly one more observation than actions, "
                f"got {len(self.obs)} observations and {len(self.acts)} actions"
            )

    def __len__(self) -> int:
        return len(self.acts)

    def extend(self, a: int, z: int) -> "History":
        """Append one action/observation step."""
        return History(self.obs + (z,), self.acts + (a,))

    def prefix(self, k: int) -> "History":
        """The prefix with `k` actions (k+1 observations)."""
        return History(self.obs[: k + 1], self.acts[:k])

    @property
    def last_obs(self) -> int:
        return self.obs[-1]


def initial_history(m: Pomdp) -> History:
    """The empty history: just the initial state's observation."""
    return History((m.obs[m.init],), ())


def format_history(m: Pomdp, h: History) -> str:
    """Render a history as `obs act obs act ... obs` using model names."""
    parts = [m.observations[h.obs[0]]]
    for a, z in zip(h.acts, h.obs[1:]):
        parts.append(m.actions[a])
        parts.append(m.observations[z])
    return " ".join(parts)


def parse_history(m: Pomdp, text: str) -> History:
    """Inverse of :func:`format_history`."""
    toks = text.split()
    if not toks or len(toks) % 2 == 0:
        raise ModelError(f"history text needs an odd number of tokens: {text!r}")
    try:
        obs = tuple(m.obs_index(t) for t in toks[0::2])
        acts = tuple(m.action_index(t) for t in toks[1::2])
    except ValueError as e:
        raise ModelError(f"unknown name in history {text!r}: {e}") from None
    return History(obs, acts)


# ---------------------------------------------------------------------------
# Beliefs
# ---------------------------------------------------------------------------

Belief = dict  # sparse map state -> probability; kept plain for numpy interop


def initial_belief(m: Pomdp) -> Belief:
    return {m.init: 1.0}


def belief_update(m: Pomdp, b: Belief, a: int, z: int) -> Belief:
    """Bayesian belief update: take action `a`, observe `z`.

    The action must be enabled in every support state.  Raises
    :class:`InconsistentObservation` when `z` has zero likelihood.
    """
    raw: dict[int, float] = {}
    for s, p in b.items():
        if (s, a) not in m.trans:
            raise ModelError(
                f"action {m.actions[a]!r} disabled in belief-support state "
                f"{m.states[s]!r}"
            )
        for s2, q in m.trans[(s, a)]:
            if m.obs[s2] == z:
                raw[s2] = raw.get(s2, 0.0) + p * q
    total = sum(raw.values())
    if total <= 0.0:
        raise InconsistentObservation(
            f"observation {m.observations[z]!r} impossible after action "
            f"{m.actions[a]!r} from belief support "
            f"{sorted(m.states[s] for s in b)}"
        )
    return {s: p / total for s, p in raw.items()}


def belief_of_history(m: Pomdp, h: History) -> Belief:
    """Fold a valid history into the belief it induces."""
    if h.obs[0] != m.obs[m.init]:
        raise InconsistentObservation(
            f"history starts with {m.observations[h.obs[0]]!r} but the initial "
            f"state observes {m.observations[m.obs[m.init]]!r}"
        )
    b = initial_belief(m)
    for a, z in zip(h.acts, h.obs[1:]):
        b = belief_update(m, b, a, z)
    return b


# ---------------------------------------------------------------------------
# History validity
# ---------------------------------------------------------------------------


def support_after(m: Pomdp, h: History) -> frozenset[int]:
    """States the system can be in after history `h` (forward subset
    propagation); empty iff `h` is not realizable by any path from init."""
    if h.obs[0] != m.obs[m.init]:
        return frozenset()
    cur = {m.init}
    for a, z in zip(h.acts, h.obs[1:]):
        nxt: set[int] = set()
        for s in cur:
            for s2, q in m.trans.get((s, a), ()):
                if q > 0.0 and m.obs[s2] == z:
                    nxt.add(s2)
        if not nxt:
            return frozenset()
        cur = nxt
    return frozenset(cur)


def validate_history(m: Pomdp, h: History) -> bool:
    """True iff some positive-probability path from the initial state
    produces exactly the observations of `h` under the actions of `h`."""
    return bool(support_after(m, h))


# ---------------------------------------------------------------------------
# Objectives
# ---------------------------------------------------------------------------

SAFETY = "safety"
BOUNDED_REACH_AVOID = "bounded-reach-avoid"


@dataclass(frozen=True)
class ObjectiveSpec:
    """What the controller must guarantee.

    `safety`: keep the probability of ever seeing a bad observation below
    1 - alpha (equivalently: always-avoid-bad with probability > alpha).
    `bounded-reach-avoid`: reach a good observation within `horizon` steps
    while avoiding bad ones, with probability > alpha.
    """

    kind: str
    bad_observations: frozenset[int]
    alpha: float
    good_observations: frozenset[int] | None = None
    horizon: int | None = None

    def __post_init__(self):
        if self.kind not in (SAFETY, BOUNDED_REACH_AVOID):
            raise ValueError(f"unknown objective kind {self.kind!r}")
        if not (0.0 <= self.alpha < 1.0):
            raise ValueError(f"alpha must lie in [0, 1), got {self.alpha}")
        if self.kind == BOUNDED_REACH_AVOID:
            if self.horizon is None or self.horizon <= 0:
                raise ValueError("bounded-reach-avoid needs a positive horizon")
            if not self.good_observations:
                raise ValueError("bounded-reach-avoid needs good observations")


# ---------------------------------------------------------------------------
# Bad-state normalization
# ---------------------------------------------------------------------------


def absorb_bad_states(m: Pomdp, bad: frozenset[int]) -> Pomdp:
    """Make every bad-observed state absorbing (self-loop under every
    action).  Safety objectives only care whether Bad is ever entered, so
    this is value-preserving; it also keeps the product construction total.

    Models whose initial state is already bad-observed are rejected: the run
    would be lost before the controller acts.
    """
    if m.obs[m.init] in bad:
        raise ModelError(
            f"initial state {m.states[m.init]!r} carries bad observation "
            f"{m.observations[m.obs[m.init]]!r}"
        )
    trans: dict[tuple[int, int], tuple[tuple[int, float], ...]] = {}
    for s in range(m.n_states):
        if m.obs[s] in bad:
            for a in range(m.n_actions):
                trans[(s, a)] = ((s, 1.0),)
        else:
            for a in m.enabled(s):
                trans[(s, a)] = m.trans[(s, a)]
    return Pomdp(m.states, m.actions, m.observations, trans, m.init, m.obs)


# ---------------------------------------------------------------------------
# Model file format
# ---------------------------------------------------------------------------

_SECTIONS = ("states", "actions", "observations", "obsfun", "init",
             "transitions", "bad", "good")


def parse_model(text: str) -> tuple[Pomdp, frozenset[int], frozenset[int]]:
    """Parse a line-oriented model file.

    Sections: `states:`, `actions:`, `observations:` (name lists),
    `obsfun:` (one `state observation` pair per line), `init: <state>`,
    `transitions:` (lines `state action successor probability`),
    `bad: <obs list>`, optional `good: <obs list>`.  `#` starts a comment.
    Per-(state, action) probability rows must sum to 1 within 1e-9.

    Returns the POMDP plus the bad/good observation sets named in the file.
    """
    sections: dict[str, list[tuple[int, str]]] = {s: [] for s in _SECTIONS}
    current: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, sep, rest = line.partition(":")
        if sep and head.strip() in _SECTIONS:
            current = head.strip()
            rest = rest.strip()
            if rest:
                sections[current].append((lineno, rest))
            continue
        if current is None:
            raise ModelError(f"line {lineno}: content before any section: {line!r}")
        sections[current].append((lineno, line))

    def names(section: str) -> list[str]:
        out: list[str] = []
        for lineno, line in sections[section]:
            for tok in line.split():
                if tok in out:
                    raise ModelError(f"line {lineno}: duplicate {section} name {tok!r}")
                out.append(tok)
        return out

    states = names("states")
    actions = names("actions")
    observations = names("observations")
    if not states or not actions or not observations:
        raise ModelError("model needs nonempty states:, actions: and observations: sections")
    sidx = {n: i for i, n in enumerate(states)}
    aidx = {n: i for i, n in enumerate(actions)}
    zidx = {n: i for i, n in enumerate(observations)}

    def lookup(table: dict[str, int], name: str, kind: str, lineno: int) -> int:
        if name not in table:
            raise ModelError(f"line {lineno}: unknown {kind} {name!r}")
        return table[name]

    obs_of: dict[int, int] = {}
    for lineno, line in sections["obsfun"]:
        toks = line.split()
        if len(toks) != 2:
            raise ModelError(f"line {lineno}: obsfun line needs `state observation`: {line!r}")
        s = lookup(sidx, toks[0], "state", lineno)
        z = lookup(zidx, toks[1], "observation", lineno)
        if s in obs_of:
            raise ModelError(f"line {lineno}: state {toks[0]!r} observed twice")
        obs_of[s] = z
    missing = [states[s] for s in range(len(states)) if s not in obs_of]
    if missing:
        raise ModelError(f"obsfun missing states: {missing}")

    if not sections["init"]:
        raise ModelError("missing init: section")
    init_line, init_text = sections["init"][0]
    init_toks = init_text.split()
    if len(sections["init"]) > 1 or len(init_toks) != 1:
        raise ModelError(f"line {init_line}: init needs exactly one state")
    init = lookup(sidx, init_toks[0], "state", init_line)

    rows: dict[tuple[int, int], dict[int, float]] = {}
    row_line: dict[tuple[int, int], int] = {}
    for lineno, line in sections["transitions"]:
        toks = line.split()
        if len(toks) != 4:
            raise ModelError(
                f"line {lineno}: transition line needs `state action successor probability`: {line!r}"
            )
        s = lookup(sidx, toks[0], "state", lineno)
        a = lookup(aidx, toks[1], "action", lineno)
        s2 = lookup(sidx, toks[2], "state", lineno)
        try:
            p = float(toks[3])
        except ValueError:
            raise ModelError(f"line {lineno}: bad probability literal {toks[3]!r}") from None
        if not (0.0 <= p <= 1.0):
            raise ModelError(f"line {lineno}: probability {p} outside [0, 1]")
        row = rows.setdefault((s, a), {})
        row_line.setdefault((s, a), lineno)
        if s2 in row:
            raise ModelError(f"line {lineno}: duplicate transition {toks[0]} {toks[1]} {toks[2]}")
        row[s2] = p
    if not rows:
        raise ModelError("missing transitions: section")

    trans: dict[tuple[int, int], tuple[tuple[int, float], ...]] = {}
    for (s, a), row in rows.items():
        total = sum(row.values())
        if abs(total - 1.0) > 1e-9:
            raise ModelError(
                f"line {row_line[(s, a)]}: distribution sum for state "
                f"{states[s]!r} action {actions[a]!r} is {total!r}, expected 1"
            )
        trans[(s, a)] = tuple(sorted((s2, p) for s2, p in row.items() if p > 0.0))

    for s in range(len(states)):
        if not any((s, a) in trans for a in range(len(actions))):
            raise ModelError(f"state {states[s]!r} has no enabled action")

    def obs_set(section: str) -> frozenset[int]:
        out: set[int] = set()
        for lineno, line in sections[section]:
            for tok in line.split():
                out.add(lookup(zidx, tok, "observation", lineno))
        return frozenset(out)

    bad = obs_set("bad")
    good = obs_set("good")

    m = Pomdp(
        states=tuple(states),
        actions=tuple(actions),
        observations=tuple(observations),
        trans=trans,
        init=init,
        obs=tuple(obs_of[s] for s in range(len(states))),
    )
    return m, bad, good


def serialize_model(m: Pomdp, bad: Iterable[int] = (), good: Iterable[int] = ()) -> str:
    """Render a POMDP in the canonical model-file form (inverse of
    :func:`parse_model` up to comment/whitespace normalization)."""
    lines: list[str] = []
    lines.append("states: " + " ".join(m.states))
    lines.append("actions: " + " ".join(m.actions))
    lines.append("observations: " + " ".join(m.observations))
    lines.append("obsfun:")
    for s in range(m.n_states):
        lines.append(f"  {m.states[s]} {m.observations[m.obs[s]]}")
    lines.append(f"init: {m.states[m.init]}")
    lines.append("transitions:")
    for s in range(m.n_states):
        for a in m.enabled(s):
            for s2, p in m.trans[(s, a)]:
                lines.append(f"  {m.states[s]} {m.actions[a]} {m.states[s2]} {p!r}")
    if bad:
        lines.append("bad: " + " ".join(m.observations[z] for z in sorted(set(bad))))
    if good:
        lines.append("good: " + " ".join(m.observations[z] for z in sorted(set(good))))
    return "\n".join(lines) + "\n"
