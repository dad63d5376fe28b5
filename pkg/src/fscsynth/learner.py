"""Automaton learning over action queries: observation table, closedness,
hypothesis construction, and counterexample-driven refinement.

The table rows are observation sequences (prefixes S plus their one-step
extensions), columns are observation sequences E containing every single
observation, and cells hold the oracle's action answers along the
interleaved history — with the don't-care symbol (None, printed `x`) at and
after the first unanswerable position.  A row whose own access chain hits a
don't-care is *dead*: no real execution reaches it, so it is exempt from
closedness and maps to a self-loop in the hypothesis.

Refinement follows the classic reduced-table approach: counterexamples add
distinguishing suffixes to E (never prefixes to S beyond closedness
promotions), located by binary search over the disagreement point, so no
consistency check is ever needed — rows of S stay pairwise distinct.
"""

from __future__ import annotations

from .checker import Counterexample
from .fsc import Fsc, bad_product_states, make_fsc
from .model import History, Pomdp
from .oracles import QueryCache, answer_action_query

Row = tuple  # observation index sequence
Entry = tuple  # per-column-position action index or None (don't-care)

X = None  # the don't-care cell symbol


class ClosednessError(ValueError):
    """A hypothesis was requested from a table that is not closed."""

    def __init__(self, row: Row):
        self.row = row
        super().__init__(f"table not closed: row {row!r} has no matching prefix row")


class ObservationTable:
    """Mutable learning state: prefixes `S`, suffixes `E`, entries `T`."""

    def __init__(self, m: Pomdp, ao, cache: QueryCache, bad=frozenset()):
        self.m = m
        self.ao = ao
        self.cache = cache
        self.bad = frozenset(bad)
        self.S: list[Row] = [()]
        self.E: list[Row] = [(z,) for z in range(m.n_observations)]
        self.T: dict[tuple[Row, Row], Entry] = {}
        self.fill_all()

    # -- row plumbing --------------------------------------------------------

    def extension_rows(self) -> list[Row]:
        """S·Z rows not already in S, in shortest-then-lexicographic order."""
        in_s = set(self.S)
        out = []
        for s in self.S:
            for z in range(self.m.n_observations):
                r = s + (z,)
                if r not in in_s:
                    out.append(r)
        return sorted(set(out), key=lambda r: (len(r), r))

    def all_rows(self) -> list[Row]:
        return list(self.S) + self.extension_rows()

    def access_actions(self, row: Row) -> list[int | None]:
        """The action chain that interleaves `row` into a history: position
        i is the answer to the single-observation column at row[:i]."""
        return [self.T[(row[:i], (row[i],))][0] for i in range(len(row))]

    def is_dead(self, row: Row) -> bool:
        """Dead rows have a don't-care in their access chain: no valid,
        not-yet-lost execution produces them."""
        return X in self.access_actions(row)

    def interleave(self, row: Row) -> tuple[tuple[int, ...], tuple[int, ...]]:
        """The (observations, actions) context of an alive row; the empty
        row's context is empty (its history starts at the initial
        observation when extended by a column)."""
        acts = self.access_actions(row)
        assert X not in acts
        return row, tuple(acts)

    # -- filling -------------------------------------------------------------

    def fill_entry(self, row: Row, col: Row) -> Entry:
        """Fill (and return) one cell: answer one query per column position,
        extending the interleaved history by one observation at a time and
        reusing each answer as the next action; the first don't-care answer
        makes the rest of the entry don't-care."""
        key = (row, col)
        if key in self.T:
            return self.T[key]
        # Row prefixes' single-observation cells are filled first (in
        # shortest-row order), so the access chain is always available.
        for i in range(len(row)):
            self.fill_entry(row[:i], (row[i],))
        acts = self.access_actions(row)
        if X in acts:
            entry: tuple = (X,) * len(col)
            self.T[key] = entry
            return entry
        obs_seq = list(row)
        act_seq = list(acts)
        out: list[int | None] = []
        for j, z in enumerate(col):
            h = History(tuple(obs_seq) + (z,), tuple(act_seq))
            a = answer_action_query(self.ao, self.cache, self.m, h, self.bad)
            out.append(a)
            if a is X:
                out.extend([X] * (len(col) - j - 1))
                break
            obs_seq.append(z)
            act_seq.append(a)
        entry = tuple(out)
        self.T[key] = entry
        return entry

    def fill_all(self) -> None:
        """Fill every missing cell, rows in shortest-then-lex order (so
        access chains exist before they are needed), columns in E order."""
        for row in sorted(self.all_rows(), key=lambda r: (len(r), r)):
            for col in self.E:
                self.fill_entry(row, col)

    def row_vector(self, row: Row) -> tuple[Entry, ...]:
        """The row's content across all columns; don't-care compares
        literally as its own symbol."""
        return tuple(self.T[(row, col)] for col in self.E)

    # -- closedness ----------------------------------------------------------

    def unclosed_row(self) -> Row | None:
        """First (shortest, then lexicographic) alive extension row whose
        vector matches no row of S; None when the table is closed.  Dead
        rows are exempt: they are never reached by a real execution."""
        s_vectors = {self.row_vector(s) for s in self.S}
        for r in self.extension_rows():
            if self.is_dead(r):
                continue
            if self.row_vector(r) not in s_vectors:
                return r
        return None

    def close(self) -> None:
        """Promote unclosed extension rows into S until closed."""
        while True:
            self.fill_all()
            r = self.unclosed_row()
            if r is None:
                return
            self.S.append(r)

    # -- hypothesis ----------------------------------------------------------

    def build_hypothesis(self) -> Fsc:
        """Controller whose nodes are the distinct row vectors of S.

        Node 0 is the empty row.  The action at (node, z) is the row's
        single-observation cell for z (don't-care cells become
        deterministic fills); the successor is the node of the extension
        row, with dead extensions self-looping.
        """
        node_of: dict[tuple, int] = {}
        reps: list[Row] = []
        for s in self.S:
            v = self.row_vector(s)
            if v not in node_of:
                node_of[v] = len(reps)
                reps.append(s)
        gamma: dict[tuple[int, int], int] = {}
        delta: dict[tuple[int, int], int] = {}
        for i, s in enumerate(reps):
            for z in range(self.m.n_observations):
                cell = self.T[(s, (z,))][0]
                if cell is not X:
                    gamma[(i, z)] = cell
                ext = s + (z,)
                if self.is_dead(ext):
                    delta[(i, z)] = i
                else:
                    v2 = self.row_vector(ext)
                    if v2 not in node_of:
                        raise ClosednessError(ext)
                    delta[(i, z)] = node_of[v2]
        return make_fsc(self.m, len(reps), gamma, delta, init=node_of[self.row_vector(())])

    # -- counterexample refinement -------------------------------------------

    def add_column(self, col: Row) -> None:
        if col not in self.E:
            self.E.append(col)
            self.fill_all()

    def _aq(self, h: History) -> int | None:
        return answer_action_query(self.ao, self.cache, self.m, h, self.bad)

    def _walk_answer(self, context: tuple[tuple, tuple], obs_seq: Row) -> int | None:
        """Extend an interleaved context by `obs_seq`, filling actions from
        successive queries; return the final answer (None once any query
        answers don't-care)."""
        obs_list, act_list = list(context[0]), list(context[1])
        ans: int | None = X
        for z in obs_seq:
            h = History(tuple(obs_list) + (z,), tuple(act_list))
            ans = self._aq(h)
            if ans is X:
                return X
            obs_list.append(z)
            act_list.append(ans)
        return ans

    def process_counterexample(self, cex: Counterexample, hyp: Fsc) -> Row | None:
        """Refine the table from a failed check, or report irrefutability.

        Each counterexample path (in emitted order) is projected to its
        observation trace; prefixes are scanned for the first position where
        the hypothesis' next action differs from the oracle's answer
        (don't-care counts as agreement).  For the first disagreeing path,
        the split point is located by binary search over probe positions —
        each probe re-asks the oracle from the access row of the
        hypothesis node reached after i observations, continued by the
        remaining observations — and the distinguishing suffix is added to
        E.  Returns that suffix, or None when every path agrees everywhere
        (the oracle cannot refute the hypothesis).
        """
        mc = cex.mc
        assert mc.back is not None and mc.pomdp is not None
        m = self.m
        for path in cex.paths:
            w = tuple(m.obs[mc.back[i][0]] for i in path)
            # Hypothesis node before responding to w[k]:
            nodes = [hyp.init]
            for z in w[:-1]:
                nodes.append(hyp.delta[nodes[-1]][z])
            hyp_acts = tuple(hyp.gamma[nodes[k]][w[k]] for k in range(len(w)))
            d = None
            for k in range(len(w)):
                h_k = History(w[: k + 1], hyp_acts[:k])
                ans = self._aq(h_k)
                if ans is not X and ans != hyp_acts[k]:
                    d = k
                    break
            if d is None:
                continue

            def probe(i: int) -> bool:
                """True iff the oracle's answer from position i agrees with
                the hypothesis (don't-care counts as agreement)."""
                ctx = self.interleave(self._access_row(hyp, nodes[i]))
                ans = self._walk_answer(ctx, w[i : d + 1])
                return ans is X or ans == hyp_acts[d]

            lo, hi = 0, d  # probe(0) disagrees (just verified), probe(d) agrees
            while hi - lo > 1:
                mid = (lo + hi) // 2
                if probe(mid):
                    hi = mid
                else:
                    lo = mid
            suffix = w[hi : d + 1]
            self.add_column(suffix)
            return suffix
        return None

    def _access_row(self, hyp: Fsc, node: int) -> Row:
        """The S row whose vector labels `node` (first occurrence order,
        matching hypothesis construction)."""
        node_of: dict[tuple, int] = {}
        reps: list[Row] = []
        for s in self.S:
            v = self.row_vector(s)
            if v not in node_of:
                node_of[v] = len(reps)
                reps.append(s)
        return reps[node]

    # -- debug dump ----------------------------------------------------------

    def dump(self) -> str:
        """Aligned text rendering of the table (debugging aid)."""
        m = self.m

        def obs_name(r: Row) -> str:
            return "·".join(m.observations[z] for z in r) if r else "ε"

        def cell(entry: Entry) -> str:
            return " ".join("x" if a is X else m.actions[a] for a in entry)

        headers = ["row"] + [obs_name(e) for e in self.E]
        body = []
        for row in self.all_rows():
            tag = "*" if row in self.S else " "
            body.append(
                [f"{tag}{obs_name(row)}"] + [cell(self.T[(row, e)]) for e in self.E]
            )
        widths = [
            max(len(r[i]) for r in [headers] + body) for i in range(len(headers))
        ]
        lines = []
        for r in [headers] + body:
            lines.append("  ".join(x.ljust(w) for x, w in zip(r, widths)))
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Free-function API
# ---------------------------------------------------------------------------


def init_table(m: Pomdp, ao, cache: QueryCache, bad=frozenset()) -> ObservationTable:
    """Fresh table over S = {empty}, E = all single observations."""
    return ObservationTable(m, ao, cache, bad)


def fill_entry(t: ObservationTable, row: Row, col: Row, ao=None, cache=None) -> Entry:
    return t.fill_entry(row, col)


def close_table(t: ObservationTable, ao=None, cache=None) -> ObservationTable:
    t.close()
    return t


def build_hypothesis(t: ObservationTable) -> Fsc:
    return t.build_hypothesis()


def process_counterexample(
    t: ObservationTable, cex: Counterexample, hyp: Fsc, m=None, ao=None, cache=None
) -> Row | None:
    return t.process_counterexample(cex, hyp)
