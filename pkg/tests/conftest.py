import numpy as np
import pytest
from hypothesis import strategies as st

from maxchoice import degree_dist as dd
from maxchoice.graph_engine import ModelParams

ACCEPTANCE_LINES = []


def record_criterion(number, name, passed, detail=""):
    ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {name}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


def params(beta=0.0, d=1):
    return ModelParams(beta, dd.point_mass(d) if isinstance(d, int) else d)


@st.composite
def tree_degrees(draw, min_vertices=2, max_vertices=8):
    """Degree sequence of a random tree, built from a random Pruefer-style code."""
    nv = draw(st.integers(min_vertices, max_vertices))
    if nv == 2:
        return [1, 1]
    code = draw(st.lists(st.integers(0, nv - 1), min_size=nv - 2, max_size=nv - 2))
    deg = np.ones(nv, dtype=int)
    for v in code:
        deg[v] += 1
    return deg.tolist()


@st.composite
def small_tables(draw, max_value=3):
    values = draw(st.lists(st.integers(1, max_value), min_size=1, max_size=max_value, unique=True))
    weights = [draw(st.floats(0.05, 1.0)) for _ in values]
    total = sum(weights)
    return dd.table({v: w / total for v, w in zip(values, weights)})


betas = st.sampled_from([-0.9, -0.5, 0.0, 0.3, 1.0, 4.0]) | st.floats(-0.95, 5.0)
