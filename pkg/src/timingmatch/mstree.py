"""Match-Store tree: a trie whose depth-``i`` root paths are the stored partial matches.

Nodes keep a parent link and sit in a per-depth level list, so a whole level
can be read without descending from the root and a new match is added by
hanging one node under its prefix.  A node carries one of three payloads:

* ``edge``: a single stream edge, the usual case;
* ``cross_link``: a pointer to a leaf of another tree whose root path is the
  segment this node stands for (the node keeps the leaf's ``backlinks`` entry
  so the owner of the leaf can find it on expiry);
* ``segment``: a copied tuple of ``(query edge, stream edge)`` pairs, used to
  measure what storage costs without cross links.

Removal is two-phase.  :meth:`MSTree.partial_remove` unlinks a node from its
level list and from its parent's children but keeps the node's own parent link
and children, so transactions that already hold a reference can still walk
upward.  :meth:`MSTree.finalize_remove` then marks the nodes dead.

The tree is not synchronized.  Everything that touches depth ``d`` (its level
list, its index, and the ``children`` maps of depth ``d - 1`` nodes) must run
under the lock for that depth.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

from .model import PartialMatch, QueryGraph, StreamEdge

ALIVE = "alive"
PARTIAL = "partially-removed"
DEAD = "dead"


class MSTreeError(RuntimeError):
    """Structural misuse, normally a scheduling bug."""


class MSNode:
    __slots__ = ("tree", "depth", "edge", "cross_link", "segment", "parent",
                 "children", "state", "backlinks")

    def __init__(self, tree: "MSTree", depth: int, parent: Optional["MSNode"],
                 edge: Optional[StreamEdge] = None, cross_link: Optional["MSNode"] = None,
                 segment: Optional[Tuple[Tuple[int, StreamEdge], ...]] = None):
        self.tree = tree
        self.depth = depth
        self.parent = parent
        self.edge = edge
        self.cross_link = cross_link
        self.segment = segment
        self.children: Dict[object, MSNode] = {}
        self.state = ALIVE
        self.backlinks: Dict[MSNode, None] = {}

    @property
    def child_key(self):
        if self.edge is not None:
            return self.edge.seq
        if self.cross_link is not None:
            return self.cross_link
        return tuple(e.seq for _, e in self.segment)

    def seqs(self) -> Tuple[int, ...]:
        if self.edge is not None:
            return (self.edge.seq,)
        if self.segment is not None:
            return tuple(e.seq for _, e in self.segment)
        return ()

    def stored_edges(self) -> int:
        if self.edge is not None:
            return 1
        if self.segment is not None:
            return len(self.segment)
        return 0

    def __repr__(self) -> str:
        if self.edge is not None:
            body = f"σ{self.edge.seq}"
        elif self.cross_link is not None:
            body = f"->{self.cross_link.tree.name}@{self.cross_link.depth}"
        else:
            body = "copy" + str(list(self.seqs()))
        return f"MSNode(d={self.depth}, {body}, {self.state})"


class _Level:
    __slots__ = ("nodes", "index", "visits", "removed", "probes")

    def __init__(self):
        self.nodes: Dict[MSNode, None] = {}
        self.index: Dict[int, Dict[MSNode, None]] = {}
        self.visits = 0
        self.removed = 0
        self.probes = 0


@dataclass
class DeleteStats:
    visits: int
    removed: int
    probes: int


class MSTree:
    """Trie of partial matches with ``depth`` levels.

    ``edge_ids[d - 1]`` names the query edge stored at depth ``d``; depths whose
    nodes carry cross links or segments use ``None``.  Without ``edge_ids`` the
    depth number itself is used as the assignment key.
    """

    def __init__(self, depth: int, edge_ids: Optional[Sequence[Optional[int]]] = None,
                 query: Optional[QueryGraph] = None, name: str = "T"):
        if depth < 1:
            raise ValueError("tree depth must be at least 1")
        self.depth = depth
        self.edge_ids = list(edge_ids) if edge_ids is not None else list(range(1, depth + 1))
        if len(self.edge_ids) != depth:
            raise ValueError("edge_ids must name every depth")
        self.query = query
        self.name = name
        self.root = MSNode(self, 0, None)
        self._levels = [_Level() for _ in range(depth + 1)]

    # ----- reading -------------------------------------------------------

    def level_nodes(self, i: int) -> List[MSNode]:
        self._check_depth(i)
        return list(self._levels[i].nodes)

    def level_size(self, i: int) -> int:
        return len(self._levels[i].nodes)

    def node_count(self) -> int:
        return sum(len(lv.nodes) for lv in self._levels[1:])

    def stored_edge_count(self) -> int:
        return sum(n.stored_edges() for lv in self._levels[1:] for n in lv.nodes)

    def path(self, node: MSNode) -> List[MSNode]:
        out = []
        while node is not None and node.depth > 0:
            out.append(node)
            node = node.parent
        out.reverse()
        return out

    def path_pairs(self, node: MSNode) -> List[Tuple[int, StreamEdge]]:
        """``(query edge, stream edge)`` pairs along the root path, resolving
        cross links and segments."""
        pairs: List[Tuple[int, StreamEdge]] = []
        for n in self.path(node):
            if n.edge is not None:
                pairs.append((self.edge_ids[n.depth - 1], n.edge))
            elif n.cross_link is not None:
                leaf = n.cross_link
                if leaf.state == DEAD:
                    raise MSTreeError(f"cross link of {n!r} points at a dead node")
                pairs.extend(leaf.tree.path_pairs(leaf))
            else:
                pairs.extend(n.segment)
        return pairs

    def path_seqs(self, node: MSNode) -> Tuple[int, ...]:
        return tuple(e.seq for _, e in self.path_pairs(node))

    def match_of(self, node: MSNode) -> PartialMatch:
        pairs = self.path_pairs(node)
        if self.query is not None:
            return PartialMatch.build(self.query, pairs)
        return PartialMatch(dict(pairs), {})

    def read_level(self, i: int) -> Iterator[PartialMatch]:
        for n in self.level_nodes(i):
            yield self.match_of(n)

    def read_paths(self, i: int) -> List[Tuple[int, ...]]:
        return [self.path_seqs(n) for n in self.level_nodes(i)]

    def resolve_cross(self, node: MSNode) -> PartialMatch:
        if node.cross_link is None:
            raise MSTreeError(f"{node!r} has no cross link")
        leaf = node.cross_link
        if leaf.state == DEAD:
            raise MSTreeError(f"cross link of {node!r} points at a dead node")
        return leaf.tree.match_of(leaf)

    # ----- writing -------------------------------------------------------

    def add_child(self, parent: MSNode, edge: Optional[StreamEdge] = None,
                  cross_link: Optional[MSNode] = None,
                  segment: Optional[Sequence[Tuple[int, StreamEdge]]] = None) -> Tuple[MSNode, bool]:
        """Attach a node under ``parent``; returns ``(node, created)``.

        An alive child with the same payload is returned instead of a duplicate.
        ``parent`` may be partially removed: an earlier transaction is allowed to
        finish attaching under a node that a later delete has started removing,
        and that delete will pick the child up when it reaches this depth.
        """
        if (edge is None) + (cross_link is None) + (segment is None) != 2:
            raise ValueError("exactly one of edge, cross_link, segment must be given")
        if parent.tree is not self:
            raise MSTreeError("parent belongs to another tree")
        if parent.state == DEAD:
            raise MSTreeError(f"insert under dead node {parent!r}")
        depth = parent.depth + 1
        if depth > self.depth:
            raise MSTreeError(f"depth {depth} exceeds tree depth {self.depth}")
        node = MSNode(self, depth, parent, edge, cross_link,
                      tuple(segment) if segment is not None else None)
        key = node.child_key
        existing = parent.children.get(key)
        if existing is not None:
            return existing, False
        parent.children[key] = node
        level = self._levels[depth]
        level.nodes[node] = None
        for s in node.seqs():
            level.index.setdefault(s, {})[node] = None
        if cross_link is not None:
            cross_link.backlinks[node] = None
        return node, True

    def insert_child(self, parent: MSNode, edge: StreamEdge) -> MSNode:
        return self.add_child(parent, edge=edge)[0]

    def index_nodes(self, i: int, seq: int) -> List[MSNode]:
        """Alive depth-``i`` nodes holding stream edge ``seq`` (one probe)."""
        level = self._levels[i]
        level.probes += 1
        return list(level.index.get(seq, ()))

    def partial_remove(self, node: MSNode) -> None:
        if node.state != ALIVE:
            raise MSTreeError(f"partial_remove on {node!r}")
        level = self._levels[node.depth]
        del level.nodes[node]
        parent = node.parent
        key = node.child_key
        if parent.children.get(key) is node:
            del parent.children[key]
        for s in node.seqs():
            bucket = level.index.get(s)
            if bucket is not None:
                bucket.pop(node, None)
                if not bucket:
                    del level.index[s]
        if node.cross_link is not None:
            node.cross_link.backlinks.pop(node, None)
        node.state = PARTIAL

    def remove_level(self, i: int, seeds: Iterable[MSNode]) -> List[MSNode]:
        """Partially remove every alive seed at depth ``i``; counts one visit per seed."""
        level = self._levels[i]
        out = []
        for n in seeds:
            level.visits += 1
            if n.state == ALIVE and n.depth == i:
                self.partial_remove(n)
                out.append(n)
        level.removed += len(out)
        return out

    @staticmethod
    def finalize_remove(nodes: Iterable[MSNode]) -> None:
        nodes = list(nodes)
        for n in nodes:
            if n.state != PARTIAL:
                raise MSTreeError(f"finalize_remove on {n!r}")
        for n in nodes:
            n.state = DEAD
            n.children.clear()
            n.backlinks.clear()
            n.parent = None

    def delete_expired(self, edge: StreamEdge, i: int) -> List[int]:
        """Remove every depth-``i`` node holding ``edge`` plus all descendants.

        Returns removed counts for depths ``i..depth``; stops early at the first
        depth that loses nothing.
        """
        self._check_depth(i)
        counts = []
        removed_all: List[MSNode] = []
        seeds = self.index_nodes(i, edge.seq)
        d = i
        while d <= self.depth:
            removed = self.remove_level(d, seeds)
            counts.append(len(removed))
            removed_all.extend(removed)
            if not removed:
                break
            d += 1
            seeds = [c for n in removed for c in n.children.values()]
        self.finalize_remove(removed_all)
        return counts

    def delete_stats(self) -> DeleteStats:
        lv = self._levels[1:]
        return DeleteStats(sum(x.visits for x in lv), sum(x.removed for x in lv),
                           sum(x.probes for x in lv))

    # ----- debugging -----------------------------------------------------

    def dump(self) -> str:
        """One line per stored node: ``depth<TAB>edge-seq<TAB>parent-seq<TAB>state``.

        Cross-linked nodes show ``x`` followed by the seq of the linked leaf's
        edge; depth-1 nodes show ``-`` as parent.  Partially removed ancestors
        of alive nodes are listed too.
        """
        seen: Dict[MSNode, None] = {}
        for lv in self._levels[1:]:
            for n in lv.nodes:
                for a in self.path(n):
                    seen.setdefault(a, None)
        lines = []
        for n in sorted(seen, key=lambda x: x.depth):
            lines.append(f"{n.depth}\t{_label(n)}\t{_label(n.parent) if n.depth > 1 else '-'}\t{n.state}")
        return "\n".join(lines)

    def _check_depth(self, i: int) -> None:
        if not 1 <= i <= self.depth:
            raise ValueError(f"depth {i} outside 1..{self.depth}")


def _label(n: MSNode) -> str:
    if n.edge is not None:
        return str(n.edge.seq)
    if n.cross_link is not None:
        leaf = n.cross_link
        return "x" + (str(leaf.edge.seq) if leaf.edge is not None else "?")
    return "c" + "+".join(str(s) for s in n.seqs())
