import numpy as np
import pytest

from probxp.model import make_problem
from probxp.synth import constant_tree, disjunction_tree, fix_dt1, fix_rf1

from helpers import ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def dt1():
    return fix_dt1()


@pytest.fixture
def dt1_problem():
    tree, space = fix_dt1()
    return make_problem(tree, space, (1, 0))


@pytest.fixture
def rf1():
    return fix_rf1()


@pytest.fixture
def disj_problem():
    tree, space = disjunction_tree()
    return make_problem(tree, space, (1, 1))


@pytest.fixture
def const_problem():
    _, space = fix_dt1()
    return make_problem(constant_tree(), space, (0, 1))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
