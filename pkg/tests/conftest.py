"""Per-criterion reporting for the acceptance suite.

Tests marked ``@pytest.mark.criterion(n)`` are grouped; a criterion passes
when every test in its group passed. Notes added through the ``acceptance``
fixture are printed next to the verdict.
"""
from __future__ import annotations

import sys
from collections import defaultdict
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_outcomes: dict[int, list[tuple[str, str]]] = defaultdict(list)
_notes: dict[int, list[str]] = defaultdict(list)
_titles: dict[int, str] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number")


def _criterion(item):
    mark = item.get_closest_marker("criterion")
    return mark if mark is not None else None


def pytest_collection_modifyitems(items):
    for item in items:
        mark = _criterion(item)
        if mark is not None:
            n = mark.args[0]
            if len(mark.args) > 1:
                _titles[n] = mark.args[1]


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = _criterion(item)
    if mark is None:
        return
    n = mark.args[0]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _outcomes[n].append((item.name, report.outcome))


@pytest.fixture
def acceptance(request):
    """``acceptance(text)`` attaches a measurement to the test's criterion."""
    mark = request.node.get_closest_marker("criterion")
    n = mark.args[0] if mark else 0

    def note(text: str) -> None:
        _notes[n].append(text)
        print(text)

    return note


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_outcomes):
        results = _outcomes[n]
        ok = all(outcome == "passed" for _, outcome in results)
        title = _titles.get(n, "")
        tr.write_line(f"criterion {n} {'PASS' if ok else 'FAIL'}: {title} ({len(results)} checks)")
        for name, outcome in results:
            if outcome != "passed":
                tr.write_line(f"    {outcome}: {name}")
        for text in _notes.get(n, []):
            tr.write_line(f"    {text}")
