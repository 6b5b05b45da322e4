import numpy as np
import pytest

from micropolar.core import PhysParams


@pytest.fixture
def oblate():
    """Unit viscosities, tau = 1, lambda = 1, nu = 2."""
    return PhysParams.unit(lam=1.0, nu=2.0)


@pytest.fixture
def oblong():
    return PhysParams.unit(lam=2.0, nu=1.0)


@pytest.fixture
def generic():
    """Non-degenerate coefficients so that no term hides behind a unit factor."""
    return PhysParams(mu=0.7, kappa=1.3, alpha=0.4, beta=0.9, gamma=1.7, tau=0.8, lam=1.2, nu=2.1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_ACCEPTANCE = {}


@pytest.fixture
def accept():
    """Record one acceptance line: ``accept(cid, passed, detail)``."""

    def record(cid, passed, detail):
        _ACCEPTANCE[cid] = (bool(passed), detail)
        print(f"[{cid}] {'PASS' if passed else 'FAIL'}  {detail}")
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_ACCEPTANCE, key=lambda c: int(c[1:])):
        ok, detail = _ACCEPTANCE[cid]
        terminalreporter.write_line(f"{cid}: {'PASS' if ok else 'FAIL'}  {detail}")
