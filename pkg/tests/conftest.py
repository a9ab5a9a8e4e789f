import numpy as np
import pytest

from gapfolio.dual_transform import dual_surface
from gapfolio.free_boundary import extract_z_boundaries, map_to_wealth
from gapfolio.market import BASELINE, EQUAL_RATES, validate_params
from gapfolio.pde_core import solve_w


@pytest.fixture(scope="session")
def equal_sol():
    return solve_w(validate_params(EQUAL_RATES), EQUAL_RATES)


@pytest.fixture(scope="session")
def base_sol():
    return solve_w(validate_params(BASELINE), BASELINE)


@pytest.fixture(scope="session")
def equal_ds(equal_sol):
    return dual_surface(equal_sol)


@pytest.fixture(scope="session")
def base_ds(base_sol):
    return dual_surface(base_sol)


@pytest.fixture(scope="session")
def base_bc(base_sol, base_ds):
    return map_to_wealth(extract_z_boundaries(base_sol), base_ds)


def closed_form_V(p, x, t):
    """No-gap value e^{-theta tau} (d e^{-r tau} - x)^2, theta = (mu-r)^2/sigma2 - 2r."""
    r = p.r1
    tau = p.T - np.asarray(t, dtype=float)
    theta = (p.mu - r) ** 2 / p.sigma2 - 2 * r
    return np.exp(-theta * tau) * (p.d * np.exp(-r * tau) - np.asarray(x, dtype=float)) ** 2


def closed_form_pi(p, x, t):
    r = p.r1
    tau = p.T - np.asarray(t, dtype=float)
    return (p.mu - r) / p.sigma2 * (p.d * np.exp(-r * tau) - np.asarray(x, dtype=float))


def closed_form_w(p, z, s):
    theta = (p.mu - p.r1) ** 2 / p.sigma2 - 2 * p.r1
    return 0.5 * np.exp(theta * s) * np.exp(z) - p.d * np.exp(-p.r1 * s)


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
