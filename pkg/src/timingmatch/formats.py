"""Plain-text stream, query, report and metrics formats.

Stream files start with ``#stream v1`` and hold one edge per line::

    <timestamp> <src_id> <src_label> <dst_id> <dst_label> [<edge_label>]

Query files hold ``v <id> <label>``, ``e <idx> <src> <dst> [<label>]`` and
``t <idx> < <idx>`` lines.  In both, blank lines and ``#`` comments are ignored.
"""

from __future__ import annotations

import os
from typing import Dict, Iterable, Iterator, List, Mapping, Tuple, Union

from .model import QueryEdge, QueryError, QueryGraph, StreamEdge, compute_closure

STREAM_HEADER = "#stream v1"
QUERY_HEADER = "#query v1"

PathOrLines = Union[str, os.PathLike, Iterable[str]]


class FormatError(ValueError):
    def __init__(self, msg: str, line: int = 0, source: str = "<input>"):
        self.line = line
        self.source = source
        where = f"{source}:{line}: " if line else f"{source}: "
        super().__init__(where + msg)


def _lines(src: PathOrLines) -> Tuple[str, Iterator[str]]:
    if isinstance(src, (str, os.PathLike)):
        name = os.fspath(src)

        def gen():
            with open(name, encoding="utf-8") as fh:
                yield from fh
        return name, gen()
    return "<input>", iter(src)


def parse_time(tok: str):
    try:
        return int(tok)
    except ValueError:
        return float(tok)


def parse_stream(src: PathOrLines) -> Iterator[StreamEdge]:
    """Yield edges with ``seq`` numbered from 1 in file order."""
    name, lines = _lines(src)
    seq = 0
    last = None
    header_seen = False
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not header_seen:
            if line == STREAM_HEADER:
                header_seen = True
                continue
            if line and not line.startswith("#"):
                raise FormatError(f"missing '{STREAM_HEADER}' header", lineno, name)
            continue
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) not in (5, 6):
            raise FormatError(f"expected 5 or 6 fields, got {len(parts)}", lineno, name)
        try:
            ts = parse_time(parts[0])
        except ValueError:
            raise FormatError(f"bad timestamp {parts[0]!r}", lineno, name) from None
        if last is not None and ts < last:
            raise FormatError(f"timestamp {parts[0]} goes backwards (previous {last})", lineno, name)
        last = ts
        if parts[1] == parts[3]:
            raise FormatError(f"self-loop on vertex {parts[1]!r}", lineno, name)
        seq += 1
        yield StreamEdge(seq, ts, parts[1], parts[2], parts[3], parts[4],
                         parts[5] if len(parts) == 6 else None)


def serialize_stream(edges: Iterable[StreamEdge]) -> str:
    out = [STREAM_HEADER]
    for e in edges:
        row = [str(e.timestamp), e.src_id, e.src_label, e.dst_id, e.dst_label]
        if e.edge_label is not None:
            row.append(e.edge_label)
        out.append(" ".join(row))
    return "\n".join(out) + "\n"


def parse_query(src: PathOrLines) -> QueryGraph:
    name, lines = _lines(src)
    vertices: Dict[str, str] = {}
    edges: List[QueryEdge] = []
    timing: List[Tuple[int, int]] = []
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        kind = parts[0]
        try:
            if kind == "v" and len(parts) == 3:
                if parts[1] in vertices:
                    raise FormatError(f"vertex {parts[1]} declared twice", lineno, name)
                vertices[parts[1]] = parts[2]
            elif kind == "e" and len(parts) in (4, 5):
                edges.append(QueryEdge(int(parts[1]), parts[2], parts[3],
                                       parts[4] if len(parts) == 5 else None))
            elif kind == "t" and len(parts) == 4 and parts[2] == "<":
                timing.append((int(parts[1]), int(parts[3])))
            else:
                raise FormatError(f"unrecognised line {line!r}", lineno, name)
        except ValueError as exc:
            if isinstance(exc, FormatError):
                raise
            raise FormatError(f"bad integer in {line!r}", lineno, name) from None
    try:
        q = QueryGraph(vertices, edges, timing)
        compute_closure(q)
    except QueryError as exc:
        raise FormatError(str(exc), 0, name) from None
    if not q.edges:
        raise FormatError("query has no edges", 0, name)
    if not q.is_connected():
        raise FormatError("query is not weakly connected", 0, name)
    return q


def serialize_query(q: QueryGraph) -> str:
    out = [QUERY_HEADER]
    for v, lab in q.vertices.items():
        out.append(f"v {v} {lab}")
    for e in q.edges:
        out.append(f"e {e.idx} {e.src} {e.dst}" + (f" {e.label}" if e.label is not None else ""))
    for a, b in sorted(q.timing):
        out.append(f"t {a} < {b}")
    return "\n".join(out) + "\n"


def parse_report_line(line: str) -> Tuple[str, int, frozenset]:
    """``t=<ts> seq=<seq> match=<e:seq,...>`` to ``(ts text, seq, {(e, seq)})``."""
    fields = dict(tok.split("=", 1) for tok in line.split())
    pairs = frozenset(tuple(int(x) for x in p.split(":")) for p in fields["match"].split(",") if p)
    return fields["t"], int(fields["seq"]), pairs


def format_metrics(metrics: Mapping[str, object]) -> str:
    return "".join(f"{k}={v}\n" for k, v in metrics.items())


def parse_metrics(text: str) -> Dict[str, str]:
    out = {}
    for line in text.splitlines():
        if line.strip():
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out
