import numpy as np
import pytest
from hypothesis import settings

from curvatura import ProblemSpec, build_grid

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")

RADIAL_PSI = "cosh(1)^2/sinh(rho)^2"
PERTURBED_PSI = "cosh(1)^2*(1 + 0.05*z)/sinh(rho)^2"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def grid16():
    return build_grid(16, 32)


@pytest.fixture(scope="session")
def radial_spec():
    return ProblemSpec(2, 0.5, 2.0, 1.0, RADIAL_PSI)


@pytest.fixture(scope="session")
def perturbed_spec():
    return ProblemSpec(2, 0.5, 2.0, 1.0, PERTURBED_PSI)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
