"""Continuous time-constrained subgraph matching over sliding-window edge streams."""

from .engine import Engine, FlatEngine, MatchReport, compatible, join
from .formats import parse_query, parse_stream, serialize_query, serialize_stream
from .model import (PartialMatch, QueryEdge, QueryGraph, SlidingWindow, StreamEdge, TimingClosure,
                    compute_closure, edge_matches, is_time_constrained_match, timing_satisfied)
from .mstree import MSNode, MSTree
from .oracle import Snapshot, preq_match_exists, snapshot_matches
from .planning import QueryPlan, compile_plan, expected_join_ops
from .runner import RunMetrics, StreamMatcher

__all__ = [
    "Engine", "FlatEngine", "MatchReport", "compatible", "join",
    "parse_query", "parse_stream", "serialize_query", "serialize_stream",
    "PartialMatch", "QueryEdge", "QueryGraph", "SlidingWindow", "StreamEdge", "TimingClosure",
    "compute_closure", "edge_matches", "is_time_constrained_match", "timing_satisfied",
    "MSNode", "MSTree", "Snapshot", "preq_match_exists", "snapshot_matches",
    "QueryPlan", "compile_plan", "expected_join_ops", "RunMetrics", "StreamMatcher",
]
