from __future__ import annotations

import pytest

from abp.graph import build_goal_graph
from abp.specio import fixture_text, parse_spec

ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


@pytest.fixture
def pizza():
    return parse_spec(fixture_text("pizza.abp.json"))


@pytest.fixture
def pizza_graph(pizza):
    return build_goal_graph(pizza)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in sorted(ACCEPTANCE_RESULTS, key=lambda r: int(r[0].split(".")[0])):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}{'  -- ' + detail if detail else ''}")
