"""Brute-force reference matcher over one snapshot.

Plain subgraph isomorphism by edge-at-a-time backtracking, then a timing
filter on every complete embedding.  It shares nothing with the incremental
engine beyond the value types and :func:`edge_matches`, which is the point.
"""

from __future__ import annotations

from collections import defaultdict
from typing import Dict, Iterable, List, Optional, Set

from .model import (PartialMatch, QueryGraph, StreamEdge, compute_closure, edge_matches,
                    timing_satisfied)

MAX_SNAPSHOT_EDGES = 10_000
MAX_QUERY_EDGES = 8


class OracleLimitError(ValueError):
    pass


class Snapshot:
    """Live edges plus out/in adjacency by vertex id."""

    def __init__(self, edges: Iterable[StreamEdge]):
        self.edges: List[StreamEdge] = list(edges)
        if len(self.edges) > MAX_SNAPSHOT_EDGES:
            raise OracleLimitError(f"snapshot has {len(self.edges)} edges, limit {MAX_SNAPSHOT_EDGES}")
        self.out_edges: Dict[str, List[StreamEdge]] = defaultdict(list)
        self.in_edges: Dict[str, List[StreamEdge]] = defaultdict(list)
        for e in self.edges:
            self.out_edges[e.src_id].append(e)
            self.in_edges[e.dst_id].append(e)

    def __len__(self) -> int:
        return len(self.edges)


def _embeddings(query: QueryGraph, snap: Snapshot, fixed: Optional[Dict[int, StreamEdge]] = None):
    """Yield every structural embedding as ``{query edge: stream edge}``."""
    if len(query.edges) > MAX_QUERY_EDGES:
        raise OracleLimitError(f"query has {len(query.edges)} edges, limit {MAX_QUERY_EDGES}")
    fixed = fixed or {}
    cands: Dict[int, List[StreamEdge]] = {}
    for qe in query.edges:
        if qe.idx in fixed:
            e = fixed[qe.idx]
            cands[qe.idx] = [e] if edge_matches(e, qe, query) else []
        else:
            cands[qe.idx] = [e for e in snap.edges if edge_matches(e, qe, query)]
        if not cands[qe.idx]:
            return
    order = sorted(cands, key=lambda q: (len(cands[q]), q))
    vmap: Dict[str, str] = {}
    taken: Dict[str, str] = {}
    used: Set[int] = set()
    asg: Dict[int, StreamEdge] = {}

    def bind(qv: str, dv: str, added: List[str]) -> bool:
        cur = vmap.get(qv)
        if cur is not None:
            return cur == dv
        if dv in taken:
            return False
        vmap[qv] = dv
        taken[dv] = qv
        added.append(qv)
        return True

    def rec(pos: int):
        if pos == len(order):
            yield dict(asg)
            return
        qi = order[pos]
        qe = query.edge(qi)
        src = vmap.get(qe.src)
        dst = vmap.get(qe.dst)
        if src is not None:
            pool = [e for e in snap.out_edges.get(src, ()) if e in cand_sets[qi]]
        elif dst is not None:
            pool = [e for e in snap.in_edges.get(dst, ()) if e in cand_sets[qi]]
        else:
            pool = cands[qi]
        for e in pool:
            if e.seq in used:
                continue
            added: List[str] = []
            if bind(qe.src, e.src_id, added) and bind(qe.dst, e.dst_id, added):
                used.add(e.seq)
                asg[qi] = e
                yield from rec(pos + 1)
                del asg[qi]
                used.discard(e.seq)
            for qv in added:
                del taken[vmap.pop(qv)]

    cand_sets = {q: set(v) for q, v in cands.items()}
    yield from rec(0)


def snapshot_matches(query: QueryGraph, snap: Snapshot) -> Set[PartialMatch]:
    tc = compute_closure(query)
    out = set()
    for asg in _embeddings(query, snap):
        m = PartialMatch.build(query, asg.items())
        if timing_satisfied(m, tc):
            out.add(m)
    return out


def preq_match_exists(edge: StreamEdge, qedge: int, snap: Snapshot, query: QueryGraph) -> bool:
    """Does the subquery induced by ``qedge`` and everything that must precede it
    have a time-constrained match in ``snap`` that assigns ``qedge`` to ``edge``?"""
    tc = compute_closure(query)
    sub = query.subquery(tc.preq[qedge])
    sub_tc = compute_closure(sub)
    for asg in _embeddings(sub, snap, fixed={qedge: edge}):
        if timing_satisfied(PartialMatch.build(sub, asg.items()), sub_tc):
            return True
    return False
