"""The eight acceptance criteria, each at its stated tolerance.

Every test records a PASS/FAIL line that is echoed in the terminal summary.
"""

import io
import time
from collections import Counter
from fractions import Fraction

import pytest

from timingmatch.cli import main
from timingmatch.concurrency import run_stream
from timingmatch.oracle import Snapshot, preq_match_exists, snapshot_matches
from timingmatch.planning import compile_plan, expected_join_ops
from timingmatch.runner import StreamMatcher

from corpus import corpus
from test_mstree import run_shadow_ops

N_ORACLE = 200
N_CONCURRENT = 50


@pytest.fixture(scope="module")
def instances():
    return [(inst, compile_plan(inst.query)) for inst in corpus(N_ORACLE)]


def test_1_running_example_golden(running_plan, running_stream, acceptance):
    start = time.perf_counter()
    sm = StreamMatcher(running_plan, 9)
    reports = []
    for e in running_stream:
        reports += [(e.timestamp, r.match.edge_set()) for r in sm.ingest(e)]
        if e.timestamp == 10:
            after = sm.current_matches()
    elapsed = time.perf_counter() - start
    ok = reports == [(8, frozenset({1, 3, 4, 5, 7, 8}))] and after == set() and elapsed < 1.0
    acceptance(1, ok, f"reports={len(reports)} matches_at_t10={len(after)} elapsed={elapsed:.3f}s")
    assert reports == [(8, frozenset({1, 3, 4, 5, 7, 8}))]
    assert after == set()
    assert elapsed < 1.0


def test_2_oracle_equivalence(instances, acceptance):
    start = time.perf_counter()
    steps = mismatches = 0
    for inst, plan in instances:
        sm = StreamMatcher(plan, inst.window)
        for e in inst.edges:
            sm.ingest(e)
            steps += 1
            if sm.current_matches() != snapshot_matches(inst.query, Snapshot(sm.window)):
                mismatches += 1
    elapsed = time.perf_counter() - start
    acceptance(2, mismatches == 0 and elapsed < 60,
               f"instances={len(instances)} steps={steps} mismatches={mismatches} elapsed={elapsed:.1f}s")
    assert mismatches == 0
    assert elapsed < 60


def test_2_corpus_shape(instances):
    assert len(instances) >= 200
    assert {inst.mode for inst, _ in instances} == {"full", "empty", "random"}
    assert {inst.window for inst, _ in instances} == {5, 9, 20}
    for inst, _ in instances:
        assert len(inst.edges) <= 200 and 2 <= len(inst.query.edges) <= 6
        assert len({e.src_label for e in inst.edges} | {e.dst_label for e in inst.edges}) <= 6


def test_3_discardable_soundness(instances, acceptance):
    checked = wrong = discardable = 0
    for inst, plan in instances:
        sm = StreamMatcher(plan, inst.window)
        for e in inst.edges:
            sm.advance(e.timestamp)
            verdict = sm.engine.is_discardable(e)
            sm.ingest(e)
            snap = Snapshot(sm.window)
            reference = not any(preq_match_exists(e, qe, snap, inst.query) for qe in plan.matching_edges(e))
            checked += 1
            discardable += verdict
            wrong += verdict != reference
    acceptance(3, wrong == 0, f"edges={checked} discardable={discardable} violations={wrong}")
    assert wrong == 0


def test_4_decomposition_goldens(data_dir, acceptance):
    buf = io.StringIO()
    assert main(["plan", str(data_dir / "running_query.txt")], out=buf) == 0
    out = buf.getvalue().splitlines()
    plan_ok = "tcsub=10" in out and "k=3" in out and "decomposition={{6,5,4},{3,1},{2}}" in out
    cost_ok = all(expected_join_ops(6, 3, d) == Fraction(8, d) for d in range(1, 7))
    acceptance(4, plan_ok and cost_ok, f"plan_golden={plan_ok} cost_8_over_d={cost_ok}")
    assert plan_ok and cost_ok


def test_5_streaming_consistency(acceptance):
    start = time.perf_counter()
    bad_logs = violations = 0
    max_held = 0
    runs = 0
    for inst in corpus(N_CONCURRENT, base=10_000):
        plan = compile_plan(inst.query)
        serial = Counter((r.match.edge_set(), r.detected_at) for r in run_stream(inst.edges, plan, inst.window, 0).reports)
        for n in (2, 4, 8):
            run = run_stream(inst.edges, plan, inst.window, n, check=True)
            runs += 1
            got = Counter((r.match.edge_set(), r.detected_at) for r in run.reports)
            bad_logs += got != serial
            violations += run.wait_list_violations + run.conflict_violations
            max_held = max(max_held, run.max_held_locks)
    elapsed = time.perf_counter() - start
    ok = bad_logs == 0 and violations == 0 and max_held <= 1 and elapsed < 120
    acceptance(5, ok, f"runs={runs} log_mismatches={bad_logs} order_violations={violations} "
                      f"max_held={max_held} elapsed={elapsed:.1f}s")
    assert bad_logs == 0 and violations == 0
    assert max_held <= 1
    assert elapsed < 120


def test_6_mstree_compression(instances, acceptance):
    worse = strict = 0
    for inst, plan in instances:
        tree = StreamMatcher(plan, inst.window)
        tree.run(inst.edges)
        flat = StreamMatcher(plan, inst.window, store="flat")
        flat.run(inst.edges)
        nodes, stored = tree.metrics.peak_msnode_count, flat.metrics.peak_stored_edges
        worse += nodes > stored
        strict += nodes < stored
    acceptance(6, worse == 0 and strict > 0, f"instances={len(instances)} above_baseline={worse} strictly_smaller={strict}")
    assert worse == 0
    assert strict > 0


def test_7_shadow_model(acceptance):
    mismatches = run_shadow_ops(100_000, seed=2026)[0]
    acceptance(7, mismatches == 0, f"ops=100000 mismatches={mismatches}")
    assert mismatches == 0


def test_8_delete_cost_linear(instances, acceptance):
    visits = removed = probes = expected_probes = 0
    for inst, plan in instances:
        sm = StreamMatcher(plan, inst.window)
        for e in inst.edges:
            expected_probes += sum(len(plan.matching_edges(g)) for g in sm.advance(e.timestamp))
            sm.ingest(e)
        for tree in sm.engine.trees[1:]:
            st = tree.delete_stats()
            visits += st.visits
            removed += st.removed
            probes += st.probes
    # every visited node is removed; the only extra work is one index probe per matched level
    ok = visits == removed and probes == expected_probes
    acceptance(8, ok, f"visits={visits} removed={removed} probes={probes} expected_probes={expected_probes}")
    assert visits == removed
    assert probes == expected_probes
