import copy

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from miranda_layers.boundary import circle, ellipse
from miranda_layers.kernels import riesz
from miranda_layers.tubular import build_tubular_field

settings.register_profile(
    "repo", deadline=None, max_examples=60, derandomize=True, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")


@pytest.fixture(scope="session")
def unit_circle():
    return circle(1.0)


@pytest.fixture(scope="session")
def ell():
    return ellipse(1.0, 0.5)


@pytest.fixture(scope="session")
def riesz1():
    return riesz(1)


@pytest.fixture(scope="session")
def circle_field(unit_circle):
    return build_tubular_field(unit_circle, 0.5)


@pytest.fixture(scope="session")
def ellipse_field(ell):
    return build_tubular_field(ell, 0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# small enough that every harness command finishes in seconds
SMALL_OVERRIDES = {
    "densities": ["abs_coord 1", "trig 3"],
    "field_check": {"samples": 500},
    "grad_scan": {"n_t": 2, "n_s": 16},
    "split": {"n_s": 4, "n_t": 3},
    "holder": {"n_s": 32, "n_t": 4, "n_h": 8, "max_pairs": 5000, "identity_points": 10, "bilinearity_points": 10},
    "constants": {"n_x": 32, "n_s": 8},
    "cylinder": {"n_eta": 16, "n_h": 4},
}


@pytest.fixture
def small_overrides():
    return copy.deepcopy(SMALL_OVERRIDES)


# acceptance verdicts, echoed live and again in the terminal summary
ACCEPTANCE_LINES = []


@pytest.fixture
def verdict(capsys):
    def emit(criterion, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
