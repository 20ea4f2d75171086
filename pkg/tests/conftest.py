import math

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_problem(rng):
    from grplq import standardize

    n, sizes = 30, [1, 2, 3, 4, 2, 3]
    X = rng.standard_normal((n, sum(sizes)))
    X[:, 1] += 0.7 * X[:, 2]
    design = standardize(X, sizes)
    y = design.X[:, 0] - 2 * design.X[:, 4] + 0.3 * rng.standard_normal(n)
    return design, y


QS = [1.0, 2.0, math.inf]
