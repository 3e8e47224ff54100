import numpy as np
import pytest

from spinpeaks.atom import build_atom_system
from spinpeaks.liouville import SpinProblem

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def sys16():
    return build_atom_system()


@pytest.fixture(scope="session")
def problem():
    return SpinProblem()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_density(rng, n=16):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
