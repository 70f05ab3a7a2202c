"""Query compilation: TC-subquery enumeration, greedy decomposition, join order, cost model.

A *timing sequence* is a tuple of query-edge indices that is a chain under the
timing closure and whose every prefix is weakly connected.  The plan splits the
query into edge-disjoint timing sequences and orders them so that every prefix
of the order is connected, preferring pairs with a high joint number.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

from .model import QueryError, QueryGraph, TimingClosure, compute_closure, labels_compatible

TimingSequence = Tuple[int, ...]


class PlanError(QueryError):
    pass


@dataclass(frozen=True)
class TCDecomposition:
    subqueries: Tuple[TimingSequence, ...]

    @property
    def k(self) -> int:
        return len(self.subqueries)

    def edges(self) -> List[int]:
        return [e for s in self.subqueries for e in s]


@dataclass(frozen=True)
class CostEstimate:
    n: Fraction
    d: int
    k: int


def enumerate_tc_subqueries(query: QueryGraph, closure: Optional[TimingClosure] = None,
                            limit: int = 10**6) -> Set[TimingSequence]:
    """All timing sequences of connected chain subqueries, grown one edge at a time.

    A sequence ``s`` extends by ``x`` when ``s[-1]`` precedes ``x`` and ``x`` touches
    a vertex already used by ``s``.  Raises :class:`PlanError` past ``limit``.
    """
    tc = closure or compute_closure(query)
    ids = query.edge_ids
    out: Set[TimingSequence] = set()
    queue = deque()
    for e in ids:
        s = (e,)
        out.add(s)
        queue.append((s, frozenset(query.endpoints(e))))
    while queue:
        seq, verts = queue.popleft()
        last = seq[-1]
        for x in sorted(tc.succ[last]):
            src, dst = query.endpoints(x)
            if src not in verts and dst not in verts:
                continue
            nxt = seq + (x,)
            if nxt in out:
                continue
            out.add(nxt)
            if len(out) > limit:
                raise PlanError(f"more than {limit} TC-subqueries; raise the limit to continue")
            queue.append((nxt, verts | {src, dst}))
    return out


def greedy_decompose(tcsub: Iterable[TimingSequence], query: QueryGraph) -> TCDecomposition:
    """Pick the longest remaining sequence that avoids already-covered edges until
    all edges are covered.  Ties go to the lowest head index, then tuple order."""
    ranked = sorted(set(tcsub), key=lambda s: (-len(s), s[0], s))
    covered: Set[int] = set()
    chosen: List[TimingSequence] = []
    for s in ranked:
        if covered.isdisjoint(s):
            chosen.append(s)
            covered.update(s)
    missing = set(query.edge_ids) - covered
    if missing:
        raise PlanError(f"sequences do not cover edges {sorted(missing)}")
    return TCDecomposition(tuple(chosen))


def joint_number(a: Sequence[int], b: Sequence[int], query: QueryGraph, closure: TimingClosure) -> int:
    shared = len(query.vertices_of(a) & query.vertices_of(b))
    timed = sum(1 for x in a for y in b if closure.related(x, y))
    return shared + timed


def _touches(a: Sequence[int], b: Sequence[int], query: QueryGraph) -> bool:
    return bool(query.vertices_of(a) & query.vertices_of(b))


def join_order(decomp: TCDecomposition, query: QueryGraph,
               closure: Optional[TimingClosure] = None) -> TCDecomposition:
    """Prefix-connected permutation driven by the joint number.

    The first two subqueries are the touching pair with the largest joint
    number; afterwards the touching subquery with the largest joint number
    against everything placed so far is appended.  Size (descending) and then
    the smallest edge index break ties.
    """
    subs = list(decomp.subqueries)
    if len(subs) <= 1:
        if not query.is_connected():
            raise PlanError("query is not weakly connected")
        return decomp
    tc = closure or compute_closure(query)

    def rank(s: TimingSequence) -> Tuple[int, int]:
        return (-len(s), min(s))

    best = None
    for x in range(len(subs)):
        for y in range(x + 1, len(subs)):
            a, b = sorted((subs[x], subs[y]), key=rank)
            if not _touches(a, b, query):
                continue
            key = (-joint_number(a, b, query, tc), rank(a), rank(b))
            if best is None or key < best[0]:
                best = (key, a, b)
    if best is None:
        raise PlanError("query is not weakly connected: no two subqueries share a vertex")
    order = [best[1], best[2]]
    rest = [s for s in subs if s is not best[1] and s is not best[2]]
    while rest:
        prefix = [e for s in order for e in s]
        cands = [s for s in rest if _touches(prefix, s, query)]
        if not cands:
            raise PlanError("query is not weakly connected")
        nxt = min(cands, key=lambda s: (-joint_number(prefix, s, query, tc), rank(s)))
        order.append(nxt)
        rest.remove(nxt)
    return TCDecomposition(tuple(order))


def random_join_order(decomp: TCDecomposition, query: QueryGraph, rng: random.Random) -> TCDecomposition:
    """Any prefix-connected permutation, chosen uniformly at each step.  Used to
    check that correctness does not depend on the joint-number heuristic."""
    rest = list(decomp.subqueries)
    if not rest:
        return decomp
    order = [rest.pop(rng.randrange(len(rest)))]
    while rest:
        prefix = [e for s in order for e in s]
        cands = [s for s in rest if _touches(prefix, s, query)]
        if not cands:
            raise PlanError("query is not weakly connected")
        pick = rng.choice(cands)
        order.append(pick)
        rest.remove(pick)
    return TCDecomposition(tuple(order))


def expected_join_ops(m: int, k: int, d: int) -> Fraction:
    """Expected join operations per incoming edge: ((m - 1) + k(k - 1)/2) / d."""
    if not (m >= k >= 1 and d >= 1):
        raise ValueError(f"need m >= k >= 1 and d >= 1, got m={m} k={k} d={d}")
    return Fraction(1, d) * ((m - 1) + Fraction(k * (k - 1), 2))


def count_term_labels(query: QueryGraph) -> int:
    return len({(query.label(e.src), e.label, query.label(e.dst)) for e in query.edges})


def is_tc_query(query: QueryGraph, closure: Optional[TimingClosure] = None) -> Optional[TimingSequence]:
    """Return the timing sequence if the whole query is one chain with connected
    prefixes, else ``None``.  Works directly from the closure, not the enumeration."""
    tc = closure or compute_closure(query)
    members = set(query.edge_ids)
    ids = sorted(members, key=lambda e: len(tc.pred[e] & members))
    for a, b in zip(ids, ids[1:]):
        if not tc.precedes(a, b):
            return None
    verts = set()
    for pos, e in enumerate(ids):
        s, d = query.endpoints(e)
        if pos and s not in verts and d not in verts:
            return None
        verts.update((s, d))
    return tuple(ids)


@dataclass
class QueryPlan:
    """Compiled query: closure, ordered decomposition and per-edge dispatch.

    ``dispatch[e] = (i, j)`` places query edge ``e`` at position ``j`` (1-based)
    of subquery ``i`` (1-based, in join order).  ``preq_layout[e]`` maps every
    other subquery ``x`` to the length of its prefix that precedes ``e``.
    """

    query: QueryGraph
    closure: TimingClosure
    decomposition: TCDecomposition
    tcsub_count: int
    cost: CostEstimate
    dispatch: Dict[int, Tuple[int, int]] = field(default_factory=dict)
    preq_layout: Dict[int, Dict[int, int]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        subs = self.decomposition.subqueries
        self.dispatch = {e: (i, j) for i, s in enumerate(subs, 1) for j, e in enumerate(s, 1)}
        for e, (i, _) in self.dispatch.items():
            layout = {}
            for x, s in enumerate(subs, 1):
                if x == i:
                    continue
                m = 0
                for p, f in enumerate(s, 1):
                    if self.closure.precedes(f, e):
                        m = p
                if m:
                    layout[x] = m
            self.preq_layout[e] = layout
        self._by_labels: Dict[Tuple[str, str], List[int]] = {}
        for qe in self.query.edges:
            key = (self.query.label(qe.src), self.query.label(qe.dst))
            self._by_labels.setdefault(key, []).append(qe.idx)

    @property
    def k(self) -> int:
        return self.decomposition.k

    def sizes(self) -> List[int]:
        return [len(s) for s in self.decomposition.subqueries]

    def subquery(self, i: int) -> TimingSequence:
        return self.decomposition.subqueries[i - 1]

    def matching_edges(self, edge) -> List[int]:
        """Query edges (ascending index) that ``edge`` can be assigned to."""
        out = []
        for qi in self._by_labels.get((edge.src_label, edge.dst_label), ()):
            if labels_compatible(self.query.edge(qi).label, edge.edge_label):
                out.append(qi)
        return out


def compile_plan(query: QueryGraph, order: str = "joint", rng: Optional[random.Random] = None,
                 limit: int = 10**6) -> QueryPlan:
    if not query.edges:
        raise PlanError("query has no edges")
    if not query.is_connected():
        raise PlanError("query is not weakly connected")
    tc = compute_closure(query)
    tcsub = enumerate_tc_subqueries(query, tc, limit=limit)
    decomp = greedy_decompose(tcsub, query)
    if order == "joint":
        decomp = join_order(decomp, query, tc)
    elif order == "random":
        decomp = random_join_order(decomp, query, rng or random.Random(0))
    else:
        raise ValueError(f"unknown join order {order!r}")
    d = count_term_labels(query)
    m, k = len(query.edges), decomp.k
    cost = CostEstimate(expected_join_ops(m, k, d), d, k)
    return QueryPlan(query, tc, decomp, len(tcsub), cost)


def format_plan(plan: QueryPlan) -> str:
    q = plan.query
    lines = [
        f"edges={len(q.edges)} vertices={len(q.vertices)} timing_pairs={len(q.timing)}",
        f"tcsub={plan.tcsub_count}",
        f"k={plan.k}",
    ]
    for i, s in enumerate(plan.decomposition.subqueries, 1):
        lines.append(f"Q{i}: " + " < ".join(f"e{e}" for e in s))
    lines.append("decomposition=" + "{" + ",".join(
        "{" + ",".join(str(e) for e in s) + "}" for s in plan.decomposition.subqueries) + "}")
    lines.append(f"d={plan.cost.d}")
    lines.append(f"expected_join_ops={plan.cost.n}")
    return "\n".join(lines)
