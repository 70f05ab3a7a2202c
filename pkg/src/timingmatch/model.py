"""Domain types for streams, windows, queries and matches.

Everything here is an immutable value except :class:`SlidingWindow`, which is
owned by whoever drives ingestion.  Stream edges are ordered by the pair
``(timestamp, seq)`` so that equal timestamps still compare strictly.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, Iterator, List, Mapping, Optional, Tuple, Union

Number = Union[int, float]
EdgeKey = Tuple[Number, int]

WILDCARD = "*"


class QueryError(ValueError):
    """Raised for malformed query graphs (dangling ids, cycles, self-loops)."""


class TimingCycleError(QueryError):
    pass


@dataclass(frozen=True)
class StreamEdge:
    seq: int
    timestamp: Number
    src_id: str
    src_label: str
    dst_id: str
    dst_label: str
    edge_label: Optional[str] = None

    def __post_init__(self) -> None:
        if self.src_id == self.dst_id:
            raise ValueError(f"self-loop on vertex {self.src_id!r} (seq={self.seq})")

    @property
    def key(self) -> EdgeKey:
        return (self.timestamp, self.seq)

    def __repr__(self) -> str:
        lab = f"[{self.edge_label}]" if self.edge_label is not None else ""
        return (f"σ{self.seq}@{self.timestamp}({self.src_label}{self.src_id}"
                f"->{self.dst_label}{self.dst_id}{lab})")


@dataclass(frozen=True)
class QueryEdge:
    idx: int
    src: str
    dst: str
    label: Optional[str] = None


def labels_compatible(query_label: Optional[str], data_label: Optional[str]) -> bool:
    """Edge-label test.  ``None`` or ``"*"`` on the query side accepts anything;
    colon-separated labels compare field by field with ``"*"`` fields free."""
    if query_label is None or query_label == WILDCARD:
        return True
    if data_label is None:
        return False
    if query_label == data_label:
        return True
    qs = query_label.split(":")
    ds = data_label.split(":")
    if len(qs) != len(ds):
        return False
    return all(q == WILDCARD or q == d for q, d in zip(qs, ds))


class QueryGraph:
    """Labelled directed pattern with a strict partial timing order over its edges.

    ``timing`` holds pairs ``(a, b)`` of edge indices meaning edge ``a`` must be
    matched by a strictly earlier stream edge than edge ``b``.
    """

    def __init__(self, vertices: Mapping[str, str], edges: Iterable[QueryEdge],
                 timing: Iterable[Tuple[int, int]] = ()):
        self.vertices: Dict[str, str] = dict(vertices)
        self.edges: Tuple[QueryEdge, ...] = tuple(sorted(edges, key=lambda e: e.idx))
        self.timing: FrozenSet[Tuple[int, int]] = frozenset((int(a), int(b)) for a, b in timing)
        self._by_idx: Dict[int, QueryEdge] = {}
        for e in self.edges:
            if e.idx in self._by_idx:
                raise QueryError(f"duplicate query edge index {e.idx}")
            if e.src not in self.vertices or e.dst not in self.vertices:
                raise QueryError(f"edge {e.idx} references an undeclared vertex")
            if e.src == e.dst:
                raise QueryError(f"edge {e.idx} is a self-loop")
            self._by_idx[e.idx] = e
        for a, b in self.timing:
            if a not in self._by_idx or b not in self._by_idx:
                raise QueryError(f"timing pair {a} < {b} references an undeclared edge")
            if a == b:
                raise TimingCycleError(f"timing pair {a} < {a} is reflexive")

    def edge(self, idx: int) -> QueryEdge:
        return self._by_idx[idx]

    @property
    def edge_ids(self) -> Tuple[int, ...]:
        return tuple(e.idx for e in self.edges)

    def label(self, vertex: str) -> str:
        return self.vertices[vertex]

    def endpoints(self, idx: int) -> Tuple[str, str]:
        e = self._by_idx[idx]
        return e.src, e.dst

    def vertices_of(self, edge_ids: Iterable[int]) -> set:
        out = set()
        for i in edge_ids:
            e = self._by_idx[i]
            out.add(e.src)
            out.add(e.dst)
        return out

    def adjacent(self, a: int, b: int) -> bool:
        ea, eb = self._by_idx[a], self._by_idx[b]
        return bool({ea.src, ea.dst} & {eb.src, eb.dst})

    def is_connected(self, edge_ids: Optional[Iterable[int]] = None) -> bool:
        """Weak connectivity of the subquery induced by ``edge_ids`` (default: all)."""
        ids = list(self.edge_ids if edge_ids is None else edge_ids)
        if not ids:
            return True
        seen_v = set(self.endpoints(ids[0]))
        remaining = set(ids[1:])
        grew = True
        while remaining and grew:
            grew = False
            for i in list(remaining):
                s, d = self.endpoints(i)
                if s in seen_v or d in seen_v:
                    seen_v.update((s, d))
                    remaining.discard(i)
                    grew = True
        return not remaining

    def subquery(self, edge_ids: Iterable[int]) -> "QueryGraph":
        ids = set(edge_ids)
        es = [e for e in self.edges if e.idx in ids]
        vs = {v: self.vertices[v] for v in self.vertices_of(ids)}
        tm = [(a, b) for a, b in self.timing if a in ids and b in ids]
        return QueryGraph(vs, es, tm)

    def __repr__(self) -> str:
        return f"QueryGraph(|V|={len(self.vertices)}, |E|={len(self.edges)}, |timing|={len(self.timing)})"


@dataclass(frozen=True)
class TimingClosure:
    closure: FrozenSet[Tuple[int, int]]
    preq: Mapping[int, FrozenSet[int]]
    succ: Mapping[int, FrozenSet[int]] = field(repr=False)
    pred: Mapping[int, FrozenSet[int]] = field(repr=False)

    def precedes(self, a: int, b: int) -> bool:
        return (a, b) in self.closure

    def related(self, a: int, b: int) -> bool:
        return (a, b) in self.closure or (b, a) in self.closure


def compute_closure(query: QueryGraph) -> TimingClosure:
    """Transitive closure of the timing order plus the prerequisite set of each edge.

    Raises :class:`TimingCycleError` when the declared pairs contain a cycle.
    """
    ids = query.edge_ids
    direct: Dict[int, set] = {i: set() for i in ids}
    for a, b in query.timing:
        direct[a].add(b)
    succ: Dict[int, FrozenSet[int]] = {}
    for start in ids:
        reach: set = set()
        stack = list(direct[start])
        while stack:
            x = stack.pop()
            if x in reach:
                continue
            reach.add(x)
            stack.extend(direct[x])
        if start in reach:
            raise TimingCycleError(f"timing order has a cycle through edge {start}")
        succ[start] = frozenset(reach)
    closure = frozenset((a, b) for a in ids for b in succ[a])
    pred = {i: frozenset(a for a in ids if i in succ[a]) for i in ids}
    preq = {i: pred[i] | {i} for i in ids}
    return TimingClosure(closure, preq, succ, pred)


def edge_matches(edge: StreamEdge, qedge: QueryEdge, query: QueryGraph) -> bool:
    return (edge.src_label == query.vertices[qedge.src]
            and edge.dst_label == query.vertices[qedge.dst]
            and labels_compatible(qedge.label, edge.edge_label))


class InconsistentMatch(ValueError):
    pass


class PartialMatch:
    """Injective assignment of a subset of query edges to stream edges.

    Equality and hashing go through :meth:`key`, the set of
    ``(query edge, stream seq)`` pairs.
    """

    __slots__ = ("assignment", "vertex_map", "_key")

    def __init__(self, assignment: Dict[int, StreamEdge], vertex_map: Dict[str, str]):
        self.assignment = assignment
        self.vertex_map = vertex_map
        self._key: Optional[FrozenSet[Tuple[int, int]]] = None

    @classmethod
    def build(cls, query: QueryGraph, pairs: Iterable[Tuple[int, StreamEdge]]) -> "PartialMatch":
        """Build from ``(query edge, stream edge)`` pairs; raises
        :class:`InconsistentMatch` if the induced vertex map is not a function."""
        assignment: Dict[int, StreamEdge] = {}
        vmap: Dict[str, str] = {}
        for qi, se in pairs:
            qe = query.edge(qi)
            for qv, dv in ((qe.src, se.src_id), (qe.dst, se.dst_id)):
                prev = vmap.get(qv)
                if prev is None:
                    vmap[qv] = dv
                elif prev != dv:
                    raise InconsistentMatch(f"query vertex {qv} mapped to {prev} and {dv}")
            assignment[qi] = se
        return cls(assignment, vmap)

    def key(self) -> FrozenSet[Tuple[int, int]]:
        if self._key is None:
            self._key = frozenset((q, e.seq) for q, e in self.assignment.items())
        return self._key

    def edge_set(self) -> FrozenSet[int]:
        return frozenset(e.seq for e in self.assignment.values())

    def latest(self) -> StreamEdge:
        return max(self.assignment.values(), key=lambda e: e.key)

    def __len__(self) -> int:
        return len(self.assignment)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, PartialMatch) and self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())

    def __repr__(self) -> str:
        body = ",".join(f"ε{q}:σ{e.seq}" for q, e in sorted(self.assignment.items()))
        return f"PartialMatch({body})"

    def format(self) -> str:
        return ",".join(f"{q}:{e.seq}" for q, e in sorted(self.assignment.items()))


def timing_satisfied(m: PartialMatch, tc: TimingClosure) -> bool:
    asg = m.assignment
    for a, b in tc.closure:
        ea = asg.get(a)
        if ea is None:
            continue
        eb = asg.get(b)
        if eb is not None and not ea.key < eb.key:
            return False
    return True


def is_time_constrained_match(query: QueryGraph, g: PartialMatch,
                              closure: Optional[TimingClosure] = None,
                              live: Optional[Iterable[StreamEdge]] = None) -> bool:
    """Full structural + timing check of ``g`` against ``query``.

    Re-derives the vertex map from the assignment instead of trusting
    ``g.vertex_map``.  When ``live`` is given, a match using a non-live edge is
    rejected.
    """
    if set(g.assignment) != set(query.edge_ids):
        raise ValueError("match does not assign every query edge")
    if live is not None:
        live_seqs = {e.seq for e in live}
        if any(e.seq not in live_seqs for e in g.assignment.values()):
            return False
    used = set()
    fmap: Dict[str, str] = {}
    for qi, se in g.assignment.items():
        if se.seq in used:
            return False
        used.add(se.seq)
        qe = query.edge(qi)
        if not edge_matches(se, qe, query):
            return False
        for qv, dv in ((qe.src, se.src_id), (qe.dst, se.dst_id)):
            if fmap.setdefault(qv, dv) != dv:
                return False
    if len(set(fmap.values())) != len(fmap):
        return False
    tc = closure if closure is not None else compute_closure(query)
    return timing_satisfied(g, tc)


class SlidingWindow:
    """Event-time window covering ``(current_time - width, current_time]``."""

    def __init__(self, width: Number):
        if width <= 0:
            raise ValueError("window width must be positive")
        self.width = width
        self.current_time: Optional[Number] = None
        self.live_edges: deque = deque()

    def expire(self, t: Number) -> List[StreamEdge]:
        if self.current_time is not None and t < self.current_time:
            raise ValueError(f"time moved backwards: {t} < {self.current_time}")
        self.current_time = t
        bound = t - self.width
        out = []
        live = self.live_edges
        while live and live[0].timestamp <= bound:
            out.append(live.popleft())
        return out

    def push(self, edge: StreamEdge) -> None:
        if self.current_time is None or edge.timestamp != self.current_time:
            raise ValueError("push() must follow expire() at the edge's timestamp")
        if self.live_edges and self.live_edges[-1].key >= edge.key:
            raise ValueError("edges must arrive in (timestamp, seq) order")
        self.live_edges.append(edge)

    def advance(self, edge: StreamEdge) -> List[StreamEdge]:
        """Expire up to ``edge.timestamp`` and append ``edge``; returns expired edges."""
        gone = self.expire(edge.timestamp)
        self.push(edge)
        return gone

    def __iter__(self) -> Iterator[StreamEdge]:
        return iter(self.live_edges)

    def __len__(self) -> int:
        return len(self.live_edges)
