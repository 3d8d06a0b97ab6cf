import pytest

from genealogy.core import GenealogyGraph, Scholar


def make_graph(edges, n=None, **columns):
    """Graph on ids ``1..n`` with per-id attribute columns given as dicts or lists."""
    ids = set(range(1, n + 1)) if n else set()
    for m, s in edges:
        ids.update((m, s))
    scholars = []
    for i in sorted(ids):
        kw = {}
        for name, col in columns.items():
            kw[name] = col.get(i) if isinstance(col, dict) else col[i - 1]
        scholars.append(Scholar(id=i, name=f"s{i}", **kw))
    return GenealogyGraph(scholars, edges)


@pytest.fixture
def graph_factory():
    return make_graph


ACCEPTANCE = {}


def record(number, ok, detail):
    """Store one acceptance verdict; printed in the terminal summary."""
    ACCEPTANCE[number] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
