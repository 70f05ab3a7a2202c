"""Lock scheduling that keeps concurrent runs equal to the serial, chronological run.

A single dispatcher turns the stream into transactions (one delete per expired
edge, then one insert per arriving edge), derives each transaction's
worst-case access plan, appends all of its lock requests to per-item wait-lists
in one atomic step and only then hands it to a worker.  A request is granted
only when it heads its wait-list and is compatible with the current holders
(shared with shared).  Grants are strictly FIFO, so two conflicting accesses to
one item always happen in dispatch order.  A transaction holds at most one item
lock at a time; when it skips a planned access (an empty join) it still
acquires and releases that lock so the requests behind it move on.

Deletes remove nodes partially under each level lock and reclaim them only
after the transaction released its last lock.

Setting ``TIMINGMATCH_CHECK=1`` turns on the wait-list order checker and the
in-memory access trace; ``TIMINGMATCH_TRACE=<path>`` additionally makes the
CLI write the trace there, one ``txn<TAB>item<TAB>S|X<TAB>acquire|release``
line per event.
"""

from __future__ import annotations

import os
import threading
import time
from collections import defaultdict, deque
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Deque, Dict, Iterable, List, Optional, Tuple

from .engine import Engine, Item, MatchReport, S, X, item_l, item_l0, item_name
from .model import EdgeKey, Number, SlidingWindow, StreamEdge
from .planning import QueryPlan
from .runner import RunMetrics, StreamMatcher

CHECK_ENV = "TIMINGMATCH_CHECK"
TRACE_ENV = "TIMINGMATCH_TRACE"

INS = "ins"
DEL = "del"


def check_mode_enabled() -> bool:
    return os.environ.get(CHECK_ENV, "").strip() not in ("", "0", "false", "no")


class SchedulerError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class LockRequest:
    txn_id: int
    txn_timestamp: EdgeKey
    lock_type: str
    item: Item


@dataclass
class Transaction:
    txn_id: int
    kind: str
    edge: StreamEdge
    lock_plan: List[Tuple[Item, str]]

    @property
    def timestamp(self) -> EdgeKey:
        return self.edge.key

    def requests(self) -> List[LockRequest]:
        return [LockRequest(self.txn_id, self.edge.key, mode, item) for item, mode in self.lock_plan]


def plan_locks(kind: str, edge: StreamEdge, plan: QueryPlan) -> List[Tuple[Item, str]]:
    """Worst-case access trace of one transaction, assuming every join is non-empty."""
    sizes = plan.sizes()
    k = plan.k
    out: List[Tuple[Item, str]] = []
    matched = plan.matching_edges(edge)
    if kind == INS:
        for qe in matched:
            i, j = plan.dispatch[qe]
            if j == 1:
                out.append((item_l(i, 1), X))
            else:
                out += [(item_l(i, j - 1), S), (item_l(i, j), X)]
            if j == sizes[i - 1] and k > 1:
                if i > 1:
                    out += [(item_l0(plan, i - 1), S), (item_l0(plan, i), X)]
                for x in range(i + 1, k + 1):
                    out += [(item_l(x, sizes[x - 1]), S), (item_l0(plan, x), X)]
    elif kind == DEL:
        for i in sorted({plan.dispatch[qe][0] for qe in matched}):
            out += [(item_l(i, j), X) for j in range(1, sizes[i - 1] + 1)]
            out += [(item_l0(plan, x), X) for x in range(max(2, i), k + 1)]
    else:
        raise ValueError(f"unknown transaction kind {kind!r}")
    return out


class LockManager:
    """Per-item FIFO wait-lists with shared/exclusive grants."""

    def __init__(self, check: bool = False):
        self.check = check
        self._cv = threading.Condition()
        self._wait: Dict[Item, Deque[LockRequest]] = defaultdict(deque)
        self._holders: Dict[Item, Dict[int, str]] = defaultdict(dict)
        self._held: Dict[int, int] = defaultdict(int)
        self.max_held = 0
        self.order_violations = 0
        self.trace: List[str] = []

    def enqueue(self, requests: Iterable[LockRequest]) -> None:
        with self._cv:
            for r in requests:
                wl = self._wait[r.item]
                if self.check and wl and wl[-1].txn_id > r.txn_id:
                    self.order_violations += 1
                wl.append(r)

    def _grantable(self, r: LockRequest) -> bool:
        wl = self._wait[r.item]
        if not wl or wl[0] is not r:
            return False
        holders = self._holders[r.item]
        if not holders:
            return True
        return r.lock_type == S and all(m == S for m in holders.values())

    def acquire(self, r: LockRequest) -> None:
        with self._cv:
            while not self._grantable(r):
                self._cv.wait()
            self._wait[r.item].popleft()
            self._holders[r.item][r.txn_id] = r.lock_type
            self._held[r.txn_id] += 1
            self.max_held = max(self.max_held, self._held[r.txn_id])
            if self.check:
                self.trace.append(f"{r.txn_id}\t{item_name(r.item)}\t{r.lock_type}\tacquire")
            self._cv.notify_all()

    def release(self, r: LockRequest) -> None:
        with self._cv:
            holders = self._holders[r.item]
            if holders.get(r.txn_id) != r.lock_type:
                raise SchedulerError(f"txn {r.txn_id} releases {item_name(r.item)} it does not hold")
            del holders[r.txn_id]
            self._held[r.txn_id] -= 1
            if not self._held[r.txn_id]:
                del self._held[r.txn_id]
            if self.check:
                self.trace.append(f"{r.txn_id}\t{item_name(r.item)}\t{r.lock_type}\trelease")
            self._cv.notify_all()

    def pending(self, item: Item) -> List[LockRequest]:
        with self._cv:
            return list(self._wait[item])

    def wait_lists_sorted(self) -> bool:
        with self._cv:
            return all(all(a.txn_id <= b.txn_id for a, b in zip(wl, list(wl)[1:]))
                       for wl in self._wait.values())


def trace_order_violations(trace: Iterable[str]) -> int:
    """Count acquisitions of an item by a transaction dispatched before the
    previous acquirer of that item."""
    last: Dict[str, int] = {}
    bad = 0
    for line in trace:
        txn, item, _, event = line.split("\t")
        if event != "acquire":
            continue
        t = int(txn)
        if item in last and t < last[item]:
            bad += 1
        last[item] = t
    return bad


class TxnGuard:
    """Walks a transaction through its lock plan in order.

    :meth:`access` first acquires and releases every planned request that the
    transaction skipped, then grants the requested one for the body of the
    ``with`` block.  :meth:`finish` does the same for whatever is left.
    """

    def __init__(self, manager: LockManager, requests: Iterable[LockRequest]):
        self.manager = manager
        self._pending: Deque[LockRequest] = deque(requests)
        self._holding: Optional[LockRequest] = None

    def _pass_through(self, r: LockRequest) -> None:
        self.manager.acquire(r)
        self.manager.release(r)

    @contextmanager
    def access(self, item: Item, mode: str):
        if self._holding is not None:
            raise SchedulerError(f"second lock {item_name(item)} requested while holding "
                                 f"{item_name(self._holding.item)}")
        while self._pending and (self._pending[0].item, self._pending[0].lock_type) != (item, mode):
            self._pass_through(self._pending.popleft())
        if not self._pending:
            raise SchedulerError(f"access {item_name(item)} {mode} is not in the lock plan")
        r = self._pending.popleft()
        self.manager.acquire(r)
        self._holding = r
        try:
            yield
        finally:
            self._holding = None
            self.manager.release(r)

    def finish(self) -> None:
        while self._pending:
            self._pass_through(self._pending.popleft())


@dataclass
class StreamRun:
    reports: List[MatchReport]
    metrics: RunMetrics
    max_held_locks: int = 0
    wait_list_violations: int = 0
    conflict_violations: int = 0
    trace: List[str] = field(default_factory=list)
    engine: Optional[object] = None


def run_stream(edges: Iterable[StreamEdge], plan: QueryPlan, width: Number, executor_count: int,
               check: Optional[bool] = None, store: str = "mstree") -> StreamRun:
    """Process a stream and return its reports in dispatch order.

    ``executor_count == 0`` runs the plain sequential path with no scheduler.
    """
    if check is None:
        check = check_mode_enabled()
    if executor_count < 0:
        raise ValueError("executor_count must be >= 0")
    if executor_count == 0:
        sm = StreamMatcher(plan, width, store=store)
        reports = sm.run(edges)
        return StreamRun(reports, sm.metrics, engine=sm.engine)
    if store != "mstree":
        raise ValueError("the concurrent path only supports the mstree store")

    engine = Engine(plan)
    manager = LockManager(check=check)
    window = SlidingWindow(width)
    metrics = RunMetrics()
    slots = threading.Semaphore(executor_count)
    futures = []
    sample_lock = threading.Lock()
    counter = [0]

    def execute(txn: Transaction, requests: List[LockRequest]):
        guard = TxnGuard(manager, requests)
        reports: List[MatchReport] = []
        stored = True
        try:
            if txn.kind == INS:
                reports, stored = engine.insert_edge(txn.edge, guard)
                guard.finish()
            else:
                res = engine.on_expire(txn.edge, guard, finalize=False)
                guard.finish()
                engine.finalize(res)
        finally:
            guard.finish()
            slots.release()
        nodes = engine.node_count()
        with sample_lock:
            metrics.sample(nodes, nodes, 0)
        return txn.kind, reports, stored

    def dispatch(kind: str, edge: StreamEdge, pool: ThreadPoolExecutor) -> None:
        lock_plan = plan_locks(kind, edge, plan)
        if not lock_plan:
            return
        counter[0] += 1
        txn = Transaction(counter[0], kind, edge, lock_plan)
        requests = txn.requests()
        slots.acquire()
        manager.enqueue(requests)
        futures.append(pool.submit(execute, txn, requests))

    start = time.perf_counter()
    ingested = 0
    with ThreadPoolExecutor(max_workers=executor_count) as pool:
        for edge in edges:
            for gone in window.expire(edge.timestamp):
                dispatch(DEL, gone, pool)
            window.push(edge)
            ingested += 1
            before = len(futures)
            dispatch(INS, edge, pool)
            if len(futures) == before:
                metrics.edges_discarded += 1
    reports: List[MatchReport] = []
    for f in futures:
        kind, reps, stored = f.result()
        reports.extend(reps)
        if kind == INS and not stored:
            metrics.edges_discarded += 1
    metrics.edges_ingested = ingested
    metrics.reports_emitted = len(reports)
    metrics.elapsed_seconds = time.perf_counter() - start
    metrics.sample(engine.node_count(), engine.node_count(), engine.stored_edge_count())
    if manager.max_held > 1:
        raise SchedulerError(f"a transaction held {manager.max_held} item locks at once")
    return StreamRun(reports, metrics, manager.max_held, manager.order_violations,
                     trace_order_violations(manager.trace), list(manager.trace), engine)
