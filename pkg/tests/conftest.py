import sys
from pathlib import Path

import pytest
from hypothesis import settings, strategies as st

from safsim.graph import build_graph

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("suite", max_examples=40, deadline=None)
settings.load_profile("suite")


@st.composite
def connected_graphs(draw, min_n=1, max_n=14):
    """A random spanning tree plus random extra edges."""
    n = draw(st.integers(min_n, max_n))
    edges = []
    for v in range(1, n):
        edges.append((draw(st.integers(0, v - 1)), v))
    if n > 1:
        extra = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=2 * n))
        edges += [(a, b) for a, b in extra if a != b]
    return build_graph(n, edges)


@pytest.fixture
def fig1_graph():
    # a b c l | e m f s | z | g x
    edges = [(0, 1), (1, 2), (2, 0), (1, 3), (2, 3), (3, 5), (5, 7), (8, 7), (5, 4), (0, 4),
             (5, 6), (6, 4), (10, 8), (10, 9), (6, 9), (5, 10)]
    return build_graph(11, edges)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[k])
