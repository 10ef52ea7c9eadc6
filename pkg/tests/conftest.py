import numpy as np
import pytest
from hypothesis import settings

from lllca.csp import Clause, Constraint, ProductMeasure, build_instance

settings.register_profile("repo", max_examples=60, deadline=None)
settings.load_profile("repo")


def chain_instance(length=4, width=3):
    """Clauses of ``width`` positive literals, consecutive ones sharing one variable."""
    step = width - 1
    clauses = [Clause([j * step + t + 1 for t in range(width)]) for j in range(length)]
    n = length * step + 1
    return build_instance([2] * n, clauses)


@pytest.fixture
def chain4():
    inst = chain_instance()
    return inst, ProductMeasure.uniform([2] * inst.n)


@pytest.fixture
def chain3_pairs():
    """c0=(x0,x1), c1=(x1,x2), c2=(x2,x3) with forbidden all-ones."""
    cons = [Constraint([i, i + 1], [(1, 1)]) for i in range(3)]
    return build_instance([2] * 4, cons)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria report: (number, passed, detail), printed after the run
ACCEPTANCE: list[tuple[int, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
