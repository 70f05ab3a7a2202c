import pytest
from hypothesis import given, settings, strategies as st

from timingmatch.formats import (FormatError, format_metrics, parse_metrics, parse_query, parse_report_line,
                                 parse_stream, serialize_query, serialize_stream)
from timingmatch.model import StreamEdge

from strategies import connected_queries


def test_parse_running_stream(running_stream):
    assert len(running_stream) == 10
    first = running_stream[0]
    assert (first.seq, first.timestamp, first.src_id, first.src_label, first.dst_id, first.dst_label) == \
        (1, 1, "7", "e", "8", "f")
    assert [e.seq for e in running_stream] == list(range(1, 11))


def test_parse_stream_with_edge_labels_and_comments():
    text = ["# produced by hand", "#stream v1", "", "1 a x b y knows", "# mid comment", "1.5 b y c z"]
    es = list(parse_stream(text))
    assert es[0].edge_label == "knows" and es[1].edge_label is None
    assert es[1].timestamp == 1.5 and es[1].seq == 2


@pytest.mark.parametrize("lines, lineno, fragment", [
    (["1 a x b y"], 1, "header"),
    (["#stream v1", "1 a x b"], 2, "fields"),
    (["#stream v1", "soon a x b y"], 2, "timestamp"),
    (["#stream v1", "2 a x b y", "1 b y c z"], 3, "backwards"),
    (["#stream v1", "1 a x a x"], 2, "self-loop"),
])
def test_stream_errors_carry_line_numbers(lines, lineno, fragment):
    with pytest.raises(FormatError) as err:
        list(parse_stream(lines))
    assert err.value.line == lineno and fragment in str(err.value)


def test_parse_running_query(running_query):
    assert len(running_query.edges) == 6
    assert set(running_query.timing) == {(3, 1), (1, 2), (6, 5), (5, 4)}
    assert running_query.vertices["5"] == "f"


@pytest.mark.parametrize("lines, fragment", [
    (["v 1 a", "v 1 b"], "twice"),
    (["v 1 a", "v 2 b", "e x 1 2"], "integer"),
    (["v 1 a", "x 1 2"], "unrecognised"),
    (["v 1 a", "v 2 b"], "no edges"),
    (["v 1 a", "v 2 b", "v 3 c", "v 4 d", "e 1 1 2", "e 2 3 4"], "connected"),
    (["v 1 a", "v 2 b", "v 3 c", "e 1 1 2", "e 2 2 3", "t 1 < 2", "t 2 < 1"], "cycle"),
])
def test_query_errors(lines, fragment):
    with pytest.raises(FormatError, match=fragment):
        parse_query(lines)


def test_query_round_trip_file(running_query, tmp_path):
    p = tmp_path / "q.txt"
    p.write_text(serialize_query(running_query))
    back = parse_query(p)
    assert serialize_query(back) == serialize_query(running_query)


@settings(max_examples=80, deadline=None)
@given(connected_queries(max_edges=6))
def test_query_round_trip_property(q):
    back = parse_query(serialize_query(q).splitlines())
    assert back.vertices == q.vertices
    assert [(e.idx, e.src, e.dst, e.label) for e in back.edges] == [(e.idx, e.src, e.dst, e.label) for e in q.edges]
    assert set(back.timing) == set(q.timing)


stream_edges = st.lists(
    st.tuples(st.integers(0, 3), st.sampled_from("abcd"), st.sampled_from("xy"),
              st.sampled_from("abcd"), st.sampled_from("xy"), st.sampled_from([None, "l", "m:n"])),
    max_size=30)


@settings(max_examples=80, deadline=None)
@given(stream_edges)
def test_stream_round_trip_property(rows):
    t = 0
    edges = []
    for gap, s, sl, d, dl, lab in rows:
        if s == d:
            continue
        t += gap
        edges.append(StreamEdge(len(edges) + 1, t, s, sl, d, dl, lab))
    assert list(parse_stream(serialize_stream(edges).splitlines())) == edges


def test_report_line_and_metrics():
    ts, seq, pairs = parse_report_line("t=8 seq=8 match=1:7,2:8,3:5,4:4,5:3,6:1")
    assert (ts, seq) == ("8", 8) and (6, 1) in pairs and len(pairs) == 6
    text = format_metrics({"edges_ingested": 10, "throughput": "3.000"})
    assert text == "edges_ingested=10\nthroughput=3.000\n"
    assert parse_metrics(text) == {"edges_ingested": "10", "throughput": "3.000"}
