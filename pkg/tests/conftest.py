import numpy as np
import pytest

from npsim.kernel import BirthKernel, build_power_law_psi, psi_from_values


@pytest.fixture(scope="session")
def psi4():
    return build_power_law_psi(4.0, 64)


@pytest.fixture(scope="session")
def psi4_long():
    return build_power_law_psi(4.0, 4096)


@pytest.fixture(scope="session")
def toy_psi():
    return psi_from_values([0.7, 0.3])


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(20240917))


def rev(lam, psi):
    return BirthKernel.reversible(lam, psi)


_ACCEPTANCE: dict = {}


@pytest.fixture
def record():
    def _record(n, ok, detail):
        _ACCEPTANCE[n] = (bool(ok), detail)
    return _record


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: end-to-end acceptance criteria (slow)")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
