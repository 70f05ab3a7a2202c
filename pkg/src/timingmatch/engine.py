"""Incremental time-constrained matcher.

Each subquery ``Q^i`` of the plan is a timing sequence; its matches by prefix
length live in tree ``T_i`` (depth ``n_i``).  Joined results over the first
``x`` subqueries form the global items ``L0^x``.  ``L0^1`` is simply the leaf
level of ``T_1``, so the ``L0`` levels for ``x >= 2`` are grafted below the
leaves of ``T_1``: a ``L0^x`` node sits at depth ``n_1 + x - 1`` of ``T_1``, its
parent is the ``L0^(x-1)`` match it extends and its payload is a cross link to
the ``T_x`` leaf that supplied the new subquery match.

All item accesses go through a guard object (``guard.access(item, mode)``) so
the concurrency layer can enforce its lock plan; the default guard does
nothing.  Items are tuples ``("L", i, j)`` and ``("L0", x)``.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

from .model import EdgeKey, PartialMatch, StreamEdge
from .mstree import MSNode, MSTree
from .planning import QueryPlan

S = "S"
X = "X"

Item = Tuple


def item_l(i: int, j: int) -> Item:
    return ("L", i, j)


def item_l0(plan: QueryPlan, x: int) -> Item:
    """``L0^1`` and the leaf item of the first subquery are one and the same."""
    if x == 1:
        return ("L", 1, len(plan.subquery(1)))
    return ("L0", x)


def item_name(item: Item) -> str:
    if item[0] == "L0":
        return f"L0^{item[1]}"
    return f"L{item[1]}^{item[2]}"


class _NullGuard:
    @contextmanager
    def access(self, item: Item, mode: str):
        yield


NULL_GUARD = _NullGuard()


def format_time(t) -> str:
    if isinstance(t, float) and t.is_integer():
        return str(int(t))
    return str(t)


@dataclass(frozen=True)
class MatchReport:
    match: PartialMatch
    detected_at: EdgeKey

    def format(self) -> str:
        t, seq = self.detected_at
        return f"t={format_time(t)} seq={seq} match={self.match.format()}"

    def identity(self) -> Tuple[frozenset, EdgeKey]:
        return (self.match.key(), self.detected_at)


def compatible(g1: PartialMatch, g2: PartialMatch, plan: QueryPlan) -> bool:
    """Can two matches over disjoint query-edge sets be merged?

    Needs a consistent injective vertex map, no stream edge used twice, and
    every closure pair that spans the two sides ordered by ``(timestamp, seq)``.
    """
    vm1 = g1.vertex_map
    used = None
    for qv, dv in g2.vertex_map.items():
        mine = vm1.get(qv)
        if mine is None:
            if used is None:
                used = set(vm1.values())
            if dv in used:
                return False
        elif mine != dv:
            return False
    a1, a2 = g1.assignment, g2.assignment
    seqs1 = {e.seq for e in a1.values()}
    if any(e.seq in seqs1 for e in a2.values()):
        return False
    closure = plan.closure.closure
    for qa, ea in a1.items():
        for qb, eb in a2.items():
            if (qa, qb) in closure:
                if not ea.key < eb.key:
                    return False
            elif (qb, qa) in closure:
                if not eb.key < ea.key:
                    return False
    return True


def merge(g1: PartialMatch, g2: PartialMatch) -> PartialMatch:
    return PartialMatch({**g1.assignment, **g2.assignment}, {**g1.vertex_map, **g2.vertex_map})


def join(delta: Iterable[PartialMatch], omega: Iterable[PartialMatch], plan: QueryPlan) -> Set[PartialMatch]:
    omega = list(omega)
    return {merge(a, b) for a in delta for b in omega if compatible(a, b, plan)}


def single(qe: int, edge: StreamEdge, plan: QueryPlan) -> PartialMatch:
    q = plan.query.edge(qe)
    return PartialMatch({qe: edge}, {q.src: edge.src_id, q.dst: edge.dst_id})


@dataclass
class ExpireResult:
    counts: Dict[Item, int] = field(default_factory=dict)
    nodes: List[MSNode] = field(default_factory=list)

    @property
    def removed(self) -> int:
        return sum(self.counts.values())


class Engine:
    """Match-store backed matcher.

    ``cross_link=False`` stores a copy of the subquery match in each ``L0`` node
    instead of a pointer, which is only useful for storage comparisons.
    """

    def __init__(self, plan: QueryPlan, cross_link: bool = True):
        self.plan = plan
        self.cross_link = cross_link
        self.last_stored = False
        self.k = plan.k
        self.sizes = plan.sizes()
        self.trees: List[Optional[MSTree]] = [None]
        for i, seq in enumerate(plan.decomposition.subqueries, 1):
            depth = len(seq) + (self.k - 1 if i == 1 else 0)
            ids = list(seq) + [None] * (depth - len(seq))
            self.trees.append(MSTree(depth, ids, plan.query, name=f"T{i}"))

    # ----- item helpers --------------------------------------------------

    def locate(self, item: Item) -> Tuple[MSTree, int]:
        if item[0] == "L0":
            x = item[1]
            if x == 1:
                return self.trees[1], self.sizes[0]
            return self.trees[1], self.sizes[0] + x - 1
        return self.trees[item[1]], item[2]

    def _l0(self, x: int) -> Item:
        return item_l0(self.plan, x)

    def _read(self, item: Item) -> List[Tuple[MSNode, PartialMatch]]:
        tree, depth = self.locate(item)
        return [(n, tree.match_of(n)) for n in tree.level_nodes(depth)]

    def item_matches(self, item: Item) -> List[PartialMatch]:
        return [m for _, m in self._read(item)]

    def final_item(self) -> Item:
        return self._l0(self.k)

    def current_matches(self) -> Set[PartialMatch]:
        return set(self.item_matches(self.final_item()))

    def node_count(self) -> int:
        return sum(t.node_count() for t in self.trees[1:])

    def stored_edge_count(self) -> int:
        return sum(t.stored_edge_count() for t in self.trees[1:])

    def all_items(self) -> List[Item]:
        out = [item_l(i, j) for i in range(1, self.k + 1) for j in range(1, self.sizes[i - 1] + 1)]
        out += [("L0", x) for x in range(2, self.k + 1)]
        return out

    # ----- insertion -----------------------------------------------------

    def on_insert(self, edge: StreamEdge, guard=NULL_GUARD) -> List[MatchReport]:
        reports, self.last_stored = self.insert_edge(edge, guard)
        return reports

    def insert_edge(self, edge: StreamEdge, guard=NULL_GUARD) -> Tuple[List[MatchReport], bool]:
        """Insert ``edge``; returns the new full matches and whether anything was stored."""
        reports: List[MatchReport] = []
        stored = False
        for qe in self.plan.matching_edges(edge):
            i, j = self.plan.dispatch[qe]
            tree = self.trees[i]
            mine = single(qe, edge, self.plan)
            if j == 1:
                with guard.access(item_l(i, 1), X):
                    node, created = tree.add_child(tree.root, edge=edge)
                delta = [(node, mine)] if created else []
            else:
                with guard.access(item_l(i, j - 1), S):
                    joined = [(p, merge(g, mine)) for p, g in self._read(item_l(i, j - 1))
                              if compatible(g, mine, self.plan)]
                if not joined:
                    continue
                delta = []
                with guard.access(item_l(i, j), X):
                    for p, m in joined:
                        node, created = tree.add_child(p, edge=edge)
                        if created:
                            delta.append((node, m))
            if delta:
                stored = True
            if j == self.sizes[i - 1] and delta:
                for m in self._propagate(i, delta, guard):
                    reports.append(MatchReport(m, edge.key))
        return reports, stored

    def _attach_l0(self, x: int, parent: MSNode, leaf: MSNode) -> Tuple[MSNode, bool]:
        t1 = self.trees[1]
        if self.cross_link:
            return t1.add_child(parent, cross_link=leaf)
        return t1.add_child(parent, segment=leaf.tree.path_pairs(leaf))

    def _propagate(self, i: int, delta: List[Tuple[MSNode, PartialMatch]], guard) -> List[PartialMatch]:
        if self.k == 1:
            return [m for _, m in delta]
        if i == 1:
            d0 = delta
        else:
            with guard.access(self._l0(i - 1), S):
                omega = self._read(self._l0(i - 1))
                joined = [(p, leaf, merge(h, g)) for leaf, g in delta
                          for p, h in omega if compatible(h, g, self.plan)]
            if not joined:
                return []
            d0 = []
            with guard.access(self._l0(i), X):
                for p, leaf, m in joined:
                    node, created = self._attach_l0(i, p, leaf)
                    if created:
                        d0.append((node, m))
        for x in range(i + 1, self.k + 1):
            if not d0:
                return []
            with guard.access(item_l(x, self.sizes[x - 1]), S):
                joined = [(p, leaf, merge(h, g)) for leaf, g in self._read(item_l(x, self.sizes[x - 1]))
                          for p, h in d0 if compatible(h, g, self.plan)]
            if not joined:
                return []
            d0 = []
            with guard.access(self._l0(x), X):
                for p, leaf, m in joined:
                    node, created = self._attach_l0(x, p, leaf)
                    if created:
                        d0.append((node, m))
        return [m for _, m in d0]

    # ----- expiry --------------------------------------------------------

    def on_expire(self, edge: StreamEdge, guard=NULL_GUARD, finalize: bool = True) -> ExpireResult:
        """Remove every stored match that uses ``edge``.

        Per subquery holding a matched position, levels are visited from the
        first matched position downward.  The nodes to remove at a level are
        the index hits for ``edge`` plus the children of nodes removed one level
        up, computed while that level's lock is held.  Removal is partial; with
        ``finalize=False`` the caller reclaims ``result.nodes`` after releasing
        its locks.
        """
        res = ExpireResult()
        positions: Dict[int, List[int]] = {}
        for qe in self.plan.matching_edges(edge):
            i, j = self.plan.dispatch[qe]
            positions.setdefault(i, []).append(j)
        for i in sorted(positions):
            self._expire_subquery(edge, i, sorted(positions[i]), guard, res)
        if finalize:
            MSTree.finalize_remove(res.nodes)
        return res

    def _expire_subquery(self, edge: StreamEdge, i: int, positions: List[int], guard, res: ExpireResult) -> None:
        tree = self.trees[i]
        n = self.sizes[i - 1]
        prev: List[MSNode] = []
        last_pos = positions[-1]
        for j in range(positions[0], n + 1):
            item = item_l(i, j)
            with guard.access(item, X):
                seeds = tree.index_nodes(j, edge.seq) if j in positions else []
                seeds += [c for p in prev for c in p.children.values()]
                removed = tree.remove_level(j, seeds)
            if removed:
                res.counts[item] = res.counts.get(item, 0) + len(removed)
                res.nodes.extend(removed)
            prev = removed
            if not removed and j >= last_pos:
                return
        if self.k == 1 or not prev:
            return
        t1 = self.trees[1]
        start = 2 if i == 1 else i
        for x in range(start, self.k + 1):
            item = ("L0", x)
            with guard.access(item, X):
                if x == start and i > 1:
                    if self.cross_link:
                        seeds = [b for leaf in prev for b in leaf.backlinks]
                    else:
                        seeds = t1.index_nodes(self.sizes[0] + x - 1, edge.seq)
                else:
                    seeds = [c for p in prev for c in p.children.values()]
                removed = t1.remove_level(self.sizes[0] + x - 1, seeds)
            if not removed:
                return
            res.counts[item] = res.counts.get(item, 0) + len(removed)
            res.nodes.extend(removed)
            prev = removed

    @staticmethod
    def finalize(res: ExpireResult) -> None:
        MSTree.finalize_remove(res.nodes)

    # ----- discardable edges ---------------------------------------------

    def is_discardable(self, edge: StreamEdge) -> bool:
        """True when, for every query edge ``e`` that ``edge`` matches, no match
        of the prerequisite subquery of ``e`` uses ``edge`` at ``e``.

        Call before :meth:`on_insert` for ``edge``.  The prerequisite subquery
        of a position-``j`` edge of ``Q^i`` is the first ``j`` edges of ``Q^i``
        together with, for every other subquery, the prefix whose edges all
        precede ``e``; those prefixes are exactly the stored items, so the check
        is a backtracking join over them.
        """
        for qe in self.plan.matching_edges(edge):
            i, j = self.plan.dispatch[qe]
            mine = single(qe, edge, self.plan)
            if j == 1:
                base = [mine]
            else:
                base = [merge(g, mine) for g in self.item_matches(item_l(i, j - 1))
                        if compatible(g, mine, self.plan)]
            if not base:
                continue
            parts = [self.item_matches(item_l(x, m)) for x, m in sorted(self.plan.preq_layout[qe].items())]
            if any(self._extends(b, parts, 0) for b in base):
                return False
        return True

    def _extends(self, acc: PartialMatch, parts: Sequence[List[PartialMatch]], idx: int) -> bool:
        if idx == len(parts):
            return True
        for g in parts[idx]:
            if compatible(acc, g, self.plan) and self._extends(merge(acc, g), parts, idx + 1):
                return True
        return False


class FlatEngine:
    """Same insert/expire logic with every item kept as an independent set of
    matches (no prefix sharing, no links).  Expiry scans every item.  Serves as
    the uncompressed storage baseline."""

    def __init__(self, plan: QueryPlan):
        self.plan = plan
        self.k = plan.k
        self.sizes = plan.sizes()
        self.items: Dict[Item, Dict[frozenset, PartialMatch]] = {}
        for i in range(1, self.k + 1):
            for j in range(1, self.sizes[i - 1] + 1):
                self.items[item_l(i, j)] = {}
        for x in range(2, self.k + 1):
            self.items[("L0", x)] = {}

    def _l0(self, x: int) -> Item:
        return item_l0(self.plan, x)

    def _store(self, item: Item, matches: Iterable[PartialMatch]) -> List[PartialMatch]:
        box = self.items[item]
        fresh = []
        for m in matches:
            if m.key() not in box:
                box[m.key()] = m
                fresh.append(m)
        return fresh

    def on_insert(self, edge: StreamEdge) -> List[MatchReport]:
        reports = []
        for qe in self.plan.matching_edges(edge):
            i, j = self.plan.dispatch[qe]
            mine = single(qe, edge, self.plan)
            if j == 1:
                delta = self._store(item_l(i, 1), [mine])
            else:
                delta = self._store(item_l(i, j), join([mine], self.items[item_l(i, j - 1)].values(), self.plan))
            if j != self.sizes[i - 1] or not delta:
                continue
            if self.k == 1:
                reports += [MatchReport(m, edge.key) for m in delta]
                continue
            d0 = delta if i == 1 else self._store(
                self._l0(i), join(delta, self.items[self._l0(i - 1)].values(), self.plan))
            for x in range(i + 1, self.k + 1):
                if not d0:
                    break
                d0 = self._store(self._l0(x), join(d0, self.items[item_l(x, self.sizes[x - 1])].values(), self.plan))
            reports += [MatchReport(m, edge.key) for m in d0]
        return reports

    def on_expire(self, edge: StreamEdge) -> int:
        removed = 0
        for box in self.items.values():
            gone = [k for k, m in box.items() if any(e.seq == edge.seq for e in m.assignment.values())]
            for k in gone:
                del box[k]
            removed += len(gone)
        return removed

    def current_matches(self) -> Set[PartialMatch]:
        return set(self.items[self._l0(self.k)].values())

    def stored_edge_count(self) -> int:
        return sum(len(m) for box in self.items.values() for m in box.values())

    def match_count(self) -> int:
        return sum(len(box) for box in self.items.values())
