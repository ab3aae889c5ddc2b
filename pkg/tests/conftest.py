import numpy as np
import pytest

from cbjj import CBJJModel
from cbjj.spectral import solve_spectrum


@pytest.fixture(scope="session")
def model_092():
    return CBJJModel(I=0.92)


@pytest.fixture(scope="session")
def pairs_092(model_092):
    return solve_spectrum(model_092)


@pytest.fixture(scope="session")
def small_model():
    """Coarse, trimmed grid for fast propagation tests."""
    return CBJJModel(I=0.92, n_phi=512, n_fock=4, trim_above=150)


def bound_sorted(pairs):
    return sorted((p for p in pairs if p.bound_flag), key=lambda p: p.energy)


# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
