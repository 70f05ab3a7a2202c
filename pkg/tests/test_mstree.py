import random
from collections import Counter

import pytest
from hypothesis import settings, strategies as st
from hypothesis.stateful import RuleBasedStateMachine, invariant, precondition, rule

from timingmatch.model import StreamEdge
from timingmatch.mstree import ALIVE, DEAD, PARTIAL, MSTree, MSTreeError


def edge(seq, t=None):
    return StreamEdge(seq, seq if t is None else t, f"s{seq}", "a", f"d{seq}", "b")


def branching_tree():
    s1, s3, s4, s9 = edge(1), edge(3), edge(4), edge(9)
    t = MSTree(3)
    n1 = t.insert_child(t.root, s1)
    n3 = t.insert_child(n1, s3)
    n4 = t.insert_child(n3, s4)
    n9 = t.insert_child(n3, s9)
    return t, (n1, n3, n4, n9), (s1, s3, s4, s9)


def test_read_level_shares_prefix():
    t, _, _ = branching_tree()
    assert sorted(t.read_paths(3)) == [(1, 3, 4), (1, 3, 9)]
    assert t.node_count() == 4
    assert {frozenset(m.edge_set()) for m in t.read_level(3)} == {frozenset({1, 3, 4}), frozenset({1, 3, 9})}


def test_empty_tree_reads_nothing():
    assert list(MSTree(2).read_level(1)) == []


def test_insert_under_root_and_siblings():
    t = MSTree(2)
    a = t.insert_child(t.root, edge(1))
    assert t.read_paths(1) == [(1,)]
    t.insert_child(a, edge(2))
    t.insert_child(a, edge(3))
    assert t.read_paths(2) == [(1, 2), (1, 3)]
    assert t.node_count() == 3


def test_duplicate_child_suppressed():
    t = MSTree(2)
    a = t.insert_child(t.root, edge(1))
    b1, created1 = t.add_child(a, edge=edge(2))
    b2, created2 = t.add_child(a, edge=edge(2))
    assert b1 is b2 and created1 and not created2
    assert t.level_size(2) == 1


def test_insert_beyond_depth_errors():
    t = MSTree(1)
    a = t.insert_child(t.root, edge(1))
    with pytest.raises(MSTreeError):
        t.insert_child(a, edge(2))


def test_delete_expired_cascade():
    t, _, (s1, *_rest) = branching_tree()
    assert t.delete_expired(s1, 1) == [1, 1, 2]
    assert t.node_count() == 0


def test_delete_absent_edge():
    t, _, _ = branching_tree()
    assert t.delete_expired(edge(42), 2) == [0]
    assert t.node_count() == 4


def test_partial_remove_hides_node_keeps_parent_link():
    t, (n1, n3, n4, n9), _ = branching_tree()
    t.partial_remove(n3)
    assert t.read_paths(2) == []
    assert n3.state == PARTIAL
    # an alive descendant still reconstructs its path through the removed node
    assert t.path_seqs(n4) == (1, 3, 4)
    with pytest.raises(MSTreeError):
        t.partial_remove(n3)


def test_finalize_equals_single_phase_delete():
    t1, _, (s1, *_r) = branching_tree()
    t2, (m1, m3, m4, m9), _ = branching_tree()
    t1.delete_expired(s1, 1)
    for n in (m1, m3, m4, m9):
        t2.partial_remove(n)
    t2.finalize_remove([m1, m3, m4, m9])
    assert t1.dump() == t2.dump() == ""
    assert all(n.state == DEAD for n in (m1, m3, m4, m9))


def test_finalize_rules():
    t, (n1, *_), _ = branching_tree()
    MSTree.finalize_remove([])
    with pytest.raises(MSTreeError):
        MSTree.finalize_remove([n1])


def test_insert_under_partial_parent_allowed_dead_parent_rejected():
    t = MSTree(2)
    p = t.insert_child(t.root, edge(1))
    t.partial_remove(p)
    c = t.insert_child(p, edge(2))
    assert c.state == ALIVE and c in p.children.values()
    t.remove_level(2, list(p.children.values()))
    MSTree.finalize_remove([p, c])
    with pytest.raises(MSTreeError):
        t.insert_child(p, edge(3))


def test_cross_link_resolution():
    t1, (n1, n3, n4, n9), _ = branching_tree()
    m0 = MSTree(1, edge_ids=[None], name="M0")
    x, _ = m0.add_child(m0.root, cross_link=n4)
    assert m0.resolve_cross(x).edge_set() == {1, 3, 4}
    assert x in n4.backlinks
    # still resolvable after the foreign leaf is only partially removed
    t1.partial_remove(n4)
    assert m0.resolve_cross(x).edge_set() == {1, 3, 4}
    MSTree.finalize_remove([n4])
    with pytest.raises(MSTreeError):
        m0.resolve_cross(x)


def test_single_edge_cross_link():
    t = MSTree(1)
    leaf = t.insert_child(t.root, edge(5))
    m0 = MSTree(1, edge_ids=[None])
    x, _ = m0.add_child(m0.root, cross_link=leaf)
    assert m0.resolve_cross(x).edge_set() == {5}


def test_dump_format():
    t, (n1, n3, n4, n9), _ = branching_tree()
    t.partial_remove(n3)
    lines = t.dump().splitlines()
    assert "1\t1\t-\talive" in lines
    assert "2\t3\t1\tpartially-removed" in lines
    assert "3\t4\t3\talive" in lines


def test_insertion_touches_no_other_node():
    t, (n1, n3, n4, n9), _ = branching_tree()
    before = {id(n): dict(n.children) for n in (n1, n4, n9)}
    t.insert_child(n3, edge(10))
    assert {id(n): dict(n.children) for n in (n1, n4, n9)} == before


class Shadow:
    """Plain multiset of paths per depth, the reference for the tree."""

    def __init__(self, depth):
        self.paths = {d: Counter() for d in range(1, depth + 1)}

    def insert(self, path):
        c = self.paths[len(path)]
        if c[path]:
            return
        c[path] += 1

    def expire(self, seq):
        for c in self.paths.values():
            for p in [p for p in c if seq in p]:
                del c[p]


def run_shadow_ops(n_ops, seed, depth=4, check_every=1, max_live=12):
    """Random inserts/expiries against tree and shadow.  Returns
    ``(mismatches, delete_visits, removed, probes)``.

    Expiry is forced once ``max_live`` edges are live, which keeps the tree
    small enough to compare in full after every operation.
    """
    rng = random.Random(seed)
    t = MSTree(depth)
    sh = Shadow(depth)
    level_of = {}
    live = []
    next_seq = 1
    mismatches = 0
    for step in range(n_ops):
        if live and (len(live) >= max_live or rng.random() < 0.3):
            seq = live.pop(rng.randrange(len(live)))
            sh.expire(seq)
            t.delete_expired(edge(seq), level_of[seq])
        else:
            d = rng.randint(1, depth)
            parents = [t.root] if d == 1 else t.level_nodes(d - 1)
            if not parents:
                continue
            seq = next_seq
            next_seq += 1
            level_of[seq] = d
            live.append(seq)
            for p in rng.sample(parents, min(len(parents), rng.randint(1, 3))):
                t.insert_child(p, edge(seq))
                sh.insert(t.path_seqs(p) + (seq,) if d > 1 else (seq,))
        if step % check_every == 0:
            for d in range(1, depth + 1):
                if Counter(t.read_paths(d)) != sh.paths[d]:
                    mismatches += 1
                    break
    st_ = t.delete_stats()
    return mismatches, st_.visits, st_.removed, st_.probes


def test_shadow_model_small():
    assert run_shadow_ops(3000, seed=7)[0] == 0


class TreeMachine(RuleBasedStateMachine):
    def __init__(self):
        super().__init__()
        self.depth = 3
        self.t = MSTree(self.depth)
        self.sh = Shadow(self.depth)
        self.level_of = {}
        self.next_seq = 1

    @rule(d=st.integers(1, 3), pick=st.randoms(use_true_random=False))
    def insert(self, d, pick):
        parents = [self.t.root] if d == 1 else self.t.level_nodes(d - 1)
        if not parents:
            return
        p = pick.choice(parents)
        seq = self.next_seq
        self.next_seq += 1
        self.level_of[seq] = d
        self.t.insert_child(p, edge(seq))
        self.sh.insert(self.t.path_seqs(p) + (seq,) if d > 1 else (seq,))

    @precondition(lambda self: self.level_of)
    @rule(pick=st.randoms(use_true_random=False))
    def expire(self, pick):
        seq = pick.choice(sorted(self.level_of))
        d = self.level_of.pop(seq)
        self.sh.expire(seq)
        self.t.delete_expired(edge(seq), d)

    @invariant()
    def paths_match(self):
        for d in range(1, self.depth + 1):
            assert Counter(self.t.read_paths(d)) == self.sh.paths[d]

    @invariant()
    def compression_bound(self):
        matches = sum(sum(c.values()) for c in self.sh.paths.values())
        assert self.t.node_count() <= matches


TestTreeMachine = TreeMachine.TestCase
TestTreeMachine.settings = settings(max_examples=50, stateful_step_count=40, deadline=None)
