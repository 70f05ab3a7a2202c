from pathlib import Path

import pytest

from timingmatch.formats import parse_query, parse_stream
from timingmatch.planning import compile_plan

DATA = Path(__file__).parent / "data"


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture
def running_query():
    return parse_query(DATA / "running_query.txt")


@pytest.fixture
def running_stream():
    return list(parse_stream(DATA / "running_stream.txt"))


@pytest.fixture
def conflict_stream():
    return list(parse_stream(DATA / "conflict_stream.txt"))


@pytest.fixture
def running_plan(running_query):
    return compile_plan(running_query)


def pytest_configure(config):
    config.acceptance_lines = []


@pytest.fixture
def acceptance(request):
    """Record one verdict line per acceptance criterion for the terminal summary."""
    lines = request.config.acceptance_lines

    def record(n, ok, detail):
        line = f"ACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} {detail}"
        print(line)
        lines.append(line)
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
