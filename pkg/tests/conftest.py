import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from asianop.domains import DomainSpec
from asianop.model import ModelParams, PayoffSpec, calibrate_supersolution, sample_grid
from asianop.solver import solve_rectangle

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

DEFAULT_BOX = ((0.25, 4.0), (0.01, 3.01))


@pytest.fixture(scope="session")
def model():
    return ModelParams(0.4, 0.05, 1.0)


@pytest.fixture(scope="session")
def fixed():
    return PayoffSpec("fixed", 1.0)


@pytest.fixture(scope="session")
def floating():
    return PayoffSpec("floating")


@pytest.fixture(scope="session")
def default_domain():
    return DomainSpec.rectangle(*DEFAULT_BOX[0], *DEFAULT_BOX[1], 1.0)


@pytest.fixture(scope="session")
def fixed_barrier(model, fixed):
    return calibrate_supersolution(model, fixed, sample_grid(*DEFAULT_BOX, 1.0))


@pytest.fixture(scope="session")
def coarse_field(model, fixed, fixed_barrier, default_domain):
    """Fixed strike on the default rectangle at 32 x 24 x 32."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return solve_rectangle(model, fixed, fixed_barrier, default_domain, 32, 24, 32)


@pytest.fixture(scope="session")
def default_field(model, fixed, fixed_barrier, default_domain):
    """Fixed strike on the default rectangle at the default 128 x 96 x 128 mesh."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return solve_rectangle(model, fixed, fixed_barrier, default_domain, 128, 96, 128)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion for the terminal summary."""
    def record(label: str, passed: bool, detail: str = ""):
        line = f"{'PASS' if passed else 'FAIL'}  {label}" + (f"  ({detail})" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
