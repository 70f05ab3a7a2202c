"""Command line entry point: ``timingmatch run|plan|oracle|gen|check``.

Exit codes: 0 success, 1 when ``check`` finds a difference, 2 for usage or
input errors.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import List, Optional, Sequence

from .concurrency import CHECK_ENV, TRACE_ENV, run_stream
from .engine import format_time
from .formats import FormatError, format_metrics, parse_query, parse_stream, serialize_query
from .generate import MODES, GenerationError, generate_query
from .model import QueryError, SlidingWindow
from .oracle import OracleLimitError, Snapshot, snapshot_matches
from .planning import PlanError, compile_plan, format_plan
from .runner import STORES, StreamMatcher

EPILOG = (f"Set {CHECK_ENV}=1 to enable the scheduler's wait-list checker and access trace; "
          f"with {TRACE_ENV}=<path> the trace is also written to that file.")


def _window(text: str):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if v <= 0:
        raise argparse.ArgumentTypeError("window must be positive")
    return int(v) if v.is_integer() else v


def _nonneg(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="timingmatch", description=__doc__.splitlines()[0], epilog=EPILOG)
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="stream matches to stdout", epilog=EPILOG)
    r.add_argument("stream")
    r.add_argument("query")
    r.add_argument("--window", type=_window, required=True, help="window width in stream time units")
    r.add_argument("--threads", type=_nonneg, default=0, help="executors; 0 = sequential path")
    r.add_argument("--metrics", help="write key=value metrics to this file")
    r.add_argument("--store", choices=STORES, default="mstree",
                   help="match storage (flat and mstree-copy exist for storage comparisons)")

    pl = sub.add_parser("plan", help="print decomposition and cost")
    pl.add_argument("query")

    o = sub.add_parser("oracle", help="brute-force match sets per step")
    o.add_argument("stream")
    o.add_argument("query")
    o.add_argument("--window", type=_window, required=True)
    o.add_argument("--new-only", action="store_true",
                   help="print only matches new at each step, in the run report format")

    g = sub.add_parser("gen", help="generate a query from a stream by random walk")
    g.add_argument("stream")
    g.add_argument("--size", type=int, required=True)
    g.add_argument("--mode", choices=MODES, default="random")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-o", "--output")

    c = sub.add_parser("check", help="compare engine against oracle at every step", epilog=EPILOG)
    c.add_argument("stream")
    c.add_argument("query")
    c.add_argument("--window", type=_window, required=True)
    c.add_argument("--threads", type=_nonneg, default=0)
    return p


def _cmd_run(a, out) -> int:
    plan = compile_plan(parse_query(a.query))
    res = run_stream(parse_stream(a.stream), plan, a.window, a.threads, store=a.store)
    for rep in res.reports:
        print(rep.format(), file=out)
    if a.metrics:
        with open(a.metrics, "w", encoding="utf-8") as fh:
            fh.write(format_metrics(res.metrics.as_dict()))
    trace_path = os.environ.get(TRACE_ENV)
    if trace_path and res.trace:
        with open(trace_path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(res.trace) + "\n")
    return 0


def _oracle_steps(stream, query, width):
    win = SlidingWindow(width)
    for e in parse_stream(stream):
        win.advance(e)
        yield e, snapshot_matches(query, Snapshot(win))


def _cmd_oracle(a, out) -> int:
    q = parse_query(a.query)
    prev = set()
    for e, ms in _oracle_steps(a.stream, q, a.window):
        ts = format_time(e.timestamp)
        if a.new_only:
            for m in sorted(ms - prev, key=lambda m: m.format()):
                print(f"t={ts} seq={e.seq} match={m.format()}", file=out)
        else:
            print(f"# t={ts} seq={e.seq} count={len(ms)}", file=out)
            for m in sorted(ms, key=lambda m: m.format()):
                print(f"t={ts} seq={e.seq} match={m.format()}", file=out)
        prev = ms
    return 0


def _cmd_gen(a, out) -> int:
    q = generate_query(list(parse_stream(a.stream)), a.size, a.mode, a.seed)
    text = serialize_query(q)
    if a.output:
        with open(a.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        out.write(text)
    return 0


def _cmd_check(a, out) -> int:
    q = parse_query(a.query)
    plan = compile_plan(q)
    edges = list(parse_stream(a.stream))
    sm = StreamMatcher(plan, a.window)
    win = SlidingWindow(a.window)
    mismatches = 0
    prev = set()
    expected_reports = []
    for e in edges:
        sm.ingest(e)
        win.advance(e)
        want = snapshot_matches(q, Snapshot(win))
        got = sm.current_matches()
        if {m.key() for m in got} != {m.key() for m in want}:
            mismatches += 1
            print(f"mismatch at t={format_time(e.timestamp)} seq={e.seq}: engine={len(got)} oracle={len(want)}", file=out)
        expected_reports += sorted(f"t={format_time(e.timestamp)} seq={e.seq} match={m.format()}" for m in want - prev)
        prev = want
    res = run_stream(edges, plan, a.window, a.threads)
    got_reports = [r.format() for r in res.reports]
    if sorted(got_reports) != sorted(expected_reports):
        mismatches += 1
        print(f"report log differs: engine={len(got_reports)} oracle={len(expected_reports)}", file=out)
    if res.wait_list_violations or res.conflict_violations:
        mismatches += 1
        print("scheduler order violations recorded", file=out)
    print(f"checked {len(edges)} steps: {'OK' if not mismatches else f'{mismatches} mismatches'}", file=out)
    return 1 if mismatches else 0


def _cmd_plan(a, out) -> int:
    print(format_plan(compile_plan(parse_query(a.query))), file=out)
    return 0


COMMANDS = {"run": _cmd_run, "plan": _cmd_plan, "oracle": _cmd_oracle, "gen": _cmd_gen, "check": _cmd_check}


def main(argv: Optional[Sequence[str]] = None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[a.cmd](a, out)
    except (FormatError, QueryError, PlanError, GenerationError, OracleLimitError, OSError, ValueError) as exc:
        print(f"timingmatch: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
