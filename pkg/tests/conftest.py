import numpy as np
import pytest

from halfline_lq import (
    CostSpec,
    WeightSpec,
    boundary_input,
    build_grid,
    dirichlet_laplacian,
    solve_riccati_ode,
)
from halfline_lq.config import ProblemConfig


@pytest.fixture(scope="session")
def reference():
    """Reference configuration: capped weight, theta 0.8, n = 200, C = I, G = 0."""
    return ProblemConfig().build()


@pytest.fixture(scope="session")
def reference_riccati(reference):
    pc = reference.config
    return solve_riccati_ode(reference.A, reference.bi, reference.cost, pc.tau, pc.T, pc.riccati_steps)


@pytest.fixture(scope="session")
def small():
    """A 100-node version of the reference setup for faster checks."""
    return ProblemConfig.model_validate({"grid": {"n": 100}}).build()


@pytest.fixture(scope="session")
def small_riccati(small):
    return solve_riccati_ode(small.A, small.bi, small.cost, 0.0, 1.0, 200)


@pytest.fixture(scope="session")
def grid400():
    return build_grid(WeightSpec(0.8, "capped"), 400, 20.0, 2.0)


def tiny_problem(n=40, kind="capped", theta=0.8):
    g = build_grid(WeightSpec(theta, kind), n, 20.0, 2.0)
    A = dirichlet_laplacian(g)
    return g, A, boundary_input(A, g, 1.0, 0.5 + theta / 8)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def identity_cost():
    return CostSpec.identity


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
