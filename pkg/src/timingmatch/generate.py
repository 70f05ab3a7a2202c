"""Random queries drawn from a stream, plus small random streams for testing.

Queries come from a random walk over the undirected graph of all edges in the
stream.  The walk records the directed edges it crosses, so the query is a
connected subgraph that has at least one embedding in the stream (its own).
Timing comes from that embedding in one of three modes:

``full``
    every pair ordered by the embedding's ``(timestamp, seq)``;
``empty``
    no timing constraints;
``random``
    ``a < b`` when ``a`` comes before ``b`` in a random permutation *and* the
    embedding of ``a`` is earlier than that of ``b``.
"""

from __future__ import annotations

import random
from collections import defaultdict
from typing import Dict, List, Optional, Sequence, Tuple

from .model import QueryEdge, QueryGraph, StreamEdge

MODES = ("full", "empty", "random")


class GenerationError(ValueError):
    pass


def _walk(edges: Sequence[StreamEdge], size: int, rng: random.Random) -> Optional[List[StreamEdge]]:
    adj: Dict[str, List[StreamEdge]] = defaultdict(list)
    for e in edges:
        adj[e.src_id].append(e)
        adj[e.dst_id].append(e)
    start = rng.choice(edges)
    picked = {start.seq: start}
    verts = [start.src_id, start.dst_id]
    cur = rng.choice(verts)
    for _ in range(size * 20):
        if len(picked) == size:
            break
        step = rng.choice(adj[cur])
        nxt = step.dst_id if step.src_id == cur else step.src_id
        picked.setdefault(step.seq, step)
        cur = nxt
    if len(picked) < size:
        return None
    return sorted(picked.values(), key=lambda e: e.key)


def generate_query(edges: Sequence[StreamEdge], size: int, mode: str = "random",
                   seed: Optional[int] = None, max_restarts: int = 1000) -> QueryGraph:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if size < 1:
        raise ValueError("size must be >= 1")
    edges = list(edges)
    if not edges:
        raise GenerationError("stream is empty")
    rng = random.Random(seed)
    walk = None
    for _ in range(max_restarts):
        walk = _walk(edges, size, rng)
        if walk is not None:
            break
    if walk is None:
        raise GenerationError(f"no connected {size}-edge subgraph found in {max_restarts} walks")
    vid: Dict[str, str] = {}
    vertices: Dict[str, str] = {}
    for e in walk:
        for d, lab in ((e.src_id, e.src_label), (e.dst_id, e.dst_label)):
            if d not in vid:
                vid[d] = f"u{len(vid) + 1}"
                vertices[vid[d]] = lab
    qedges = [QueryEdge(n, vid[e.src_id], vid[e.dst_id], e.edge_label) for n, e in enumerate(walk, 1)]
    # walk is sorted by key, so query edge n is embedded at walk[n - 1]
    timing: List[Tuple[int, int]] = []
    ids = [q.idx for q in qedges]
    if mode == "full":
        timing = [(a, b) for a in ids for b in ids if a < b]
    elif mode == "random":
        perm = ids[:]
        rng.shuffle(perm)
        pos = {e: p for p, e in enumerate(perm)}
        timing = [(a, b) for a in ids for b in ids if a < b and pos[a] < pos[b]]
    return QueryGraph(vertices, qedges, timing)


def random_stream(seed: int, n_edges: int = 100, n_vertices: int = 12, n_labels: int = 4,
                  edge_labels: Sequence[Optional[str]] = (None,), max_gap: int = 2) -> List[StreamEdge]:
    """Stream over a fixed vertex set with a fixed label per vertex.

    Consecutive timestamps differ by ``0..max_gap`` so ties occur.
    """
    rng = random.Random(seed)
    labels = [chr(ord("a") + i) for i in range(n_labels)]
    vlabel = {str(v): rng.choice(labels) for v in range(1, n_vertices + 1)}
    names = list(vlabel)
    t = 1
    out = []
    for seq in range(1, n_edges + 1):
        src, dst = rng.sample(names, 2)
        out.append(StreamEdge(seq, t, src, vlabel[src], dst, vlabel[dst], rng.choice(list(edge_labels))))
        t += rng.randint(0, max_gap)
    return out
