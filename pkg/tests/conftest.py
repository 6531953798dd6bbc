import math

import numpy as np
import pytest

from stepwise import problems


def intro_exact(breakpoints, values, x0=5.0):
    """Closed-form state and cost of x' = x + u, L = 2x - 3u - u^2 under a
    piecewise-constant u. Returns (states at breakpoints, J)."""
    xs = [x0]
    J = 0.0
    x = x0
    for a, b, u in zip(breakpoints[:-1], breakpoints[1:], np.ravel(values)):
        d = b - a
        # x(t) = (x_a + u) e^{t-a} - u
        J += 2.0 * (x + u) * math.expm1(d) - 2.0 * u * d - (3.0 * u + u * u) * d
        x = (x + u) * math.exp(d) - u
        xs.append(x)
    return np.array(xs), J


@pytest.fixture(scope="session")
def intro():
    return problems.builtin("intro")


@pytest.fixture(scope="session")
def chemo():
    return problems.builtin("chemo")


@pytest.fixture(scope="session")
def dsdi():
    return problems.builtin("dsdi")


# one line per acceptance criterion, echoed in the terminal summary
CRITERIA: list[str] = []


def record_criterion(number: int, ok: bool, detail: str) -> str:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    CRITERIA.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
