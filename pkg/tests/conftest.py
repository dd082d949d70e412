import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from nappal.model import ProblemSpec  # noqa: E402


def make_toy(H_slope=0.0):
    """Scalar toy: G = J = 0, Theta(u) = u, B = [-1], H(v) = H_slope * v."""
    return ProblemSpec(
        blocks=(1,), B=np.array([[-1.0]]),
        omega=lambda u: np.asarray(u, dtype=float).copy(),
        omega_jac=lambda u: np.ones((1, 1)),
        L_omega_components=[0.0], L_theta=1.0,
        H=lambda v: H_slope * float(v[0]),
        grad_H=lambda v: np.array([H_slope]),
        L_H=0.0,
    )


@pytest.fixture
def toy():
    return make_toy()


@pytest.fixture
def toy_h():
    return make_toy(0.5)


def make_c1():
    """Constant set C1: L_G = L_H = 1, L_Omega = 0, L_theta = 1, ||B|| = lambda_min = 1."""
    spec = make_toy()
    spec.L_G, spec.L_H = 1.0, 1.0
    return spec


@pytest.fixture
def c1spec():
    return make_c1()


# acceptance criteria register one line each here; printed after the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
