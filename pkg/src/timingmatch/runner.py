"""Sequential driver: window bookkeeping, engine calls and run metrics."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Set

from .engine import Engine, FlatEngine, MatchReport
from .model import Number, PartialMatch, SlidingWindow, StreamEdge
from .planning import QueryPlan

STORES = ("mstree", "mstree-copy", "flat")


@dataclass
class RunMetrics:
    edges_ingested: int = 0
    edges_discarded: int = 0
    reports_emitted: int = 0
    peak_partial_matches: int = 0
    peak_msnode_count: int = 0
    peak_stored_edges: int = 0
    elapsed_seconds: float = 0.0
    extra: Dict[str, object] = field(default_factory=dict)

    @property
    def throughput(self) -> float:
        """Edges per second; never zero once something was ingested."""
        if not self.edges_ingested:
            return 0.0
        return self.edges_ingested / max(self.elapsed_seconds, 1e-9)

    def sample(self, matches: int, nodes: int, stored_edges: int) -> None:
        self.peak_partial_matches = max(self.peak_partial_matches, matches)
        self.peak_msnode_count = max(self.peak_msnode_count, nodes)
        self.peak_stored_edges = max(self.peak_stored_edges, stored_edges)

    def as_dict(self) -> Dict[str, object]:
        out = {
            "edges_ingested": self.edges_ingested,
            "edges_discarded": self.edges_discarded,
            "reports_emitted": self.reports_emitted,
            "peak_partial_matches": self.peak_partial_matches,
            "peak_msnode_count": self.peak_msnode_count,
            "peak_stored_edges": self.peak_stored_edges,
            "elapsed_seconds": f"{self.elapsed_seconds:.6f}",
            "throughput": f"{self.throughput:.3f}",
        }
        out.update(self.extra)
        return out


class StreamMatcher:
    """Feeds edges through a window into one engine, single-threaded.

    Expired edges are removed before the new edge is inserted, so an edge at
    time ``t`` never meets edges at or before ``t - width``.
    """

    def __init__(self, plan: QueryPlan, width: Number, store: str = "mstree"):
        if store not in STORES:
            raise ValueError(f"unknown store {store!r}; pick one of {STORES}")
        self.plan = plan
        self.window = SlidingWindow(width)
        self.store = store
        if store == "flat":
            self.engine = FlatEngine(plan)
        else:
            self.engine = Engine(plan, cross_link=(store == "mstree"))
        self.metrics = RunMetrics()

    def _sample(self) -> None:
        eng = self.engine
        if isinstance(eng, FlatEngine):
            n = eng.match_count()
            self.metrics.sample(n, n, eng.stored_edge_count())
        else:
            n = eng.node_count()
            self.metrics.sample(n, n, eng.stored_edge_count())

    def advance(self, t: Number) -> List[StreamEdge]:
        gone = self.window.expire(t)
        for e in gone:
            self.engine.on_expire(e)
            self._sample()
        return gone

    def ingest(self, edge: StreamEdge) -> List[MatchReport]:
        start = time.perf_counter()
        self.advance(edge.timestamp)
        self.window.push(edge)
        if isinstance(self.engine, FlatEngine):
            before = self.engine.match_count()
            reports = self.engine.on_insert(edge)
            stored = self.engine.match_count() > before
        else:
            reports = self.engine.on_insert(edge)
            stored = self.engine.last_stored
        self._sample()
        m = self.metrics
        m.edges_ingested += 1
        m.edges_discarded += 0 if stored else 1
        m.reports_emitted += len(reports)
        m.elapsed_seconds += time.perf_counter() - start
        return reports

    def run(self, edges: Iterable[StreamEdge]) -> List[MatchReport]:
        out: List[MatchReport] = []
        for e in edges:
            out.extend(self.ingest(e))
        return out

    def current_matches(self) -> Set[PartialMatch]:
        return self.engine.current_matches()
