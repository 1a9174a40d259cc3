import numpy as np
import pytest

from cnls.params import SystemParams


def coupled(n=1, N=2, p=3.0, beta=0.5, mu=1.0, lam=1.0, gamma=2.0):
    """N equal components with one common coupling."""
    b = np.full((N, N), float(beta))
    np.fill_diagonal(b, 0.0)
    return SystemParams(n=n, N=N, p=p, mu=np.full(N, float(mu)), beta=b, lam=np.full(N, lam),
                        gamma=gamma)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
