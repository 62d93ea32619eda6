import numpy as np
import pytest

from onlinemc.sparse import PartialSVD, SparseMatrix

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_svd(rng, m, n, k, scale=1.0):
    P, _ = np.linalg.qr(rng.standard_normal((m, k)))
    Q, _ = np.linalg.qr(rng.standard_normal((n, k)))
    s = np.sort(rng.uniform(0.5, 2.0, k) * scale)[::-1]
    return PartialSVD(P, s, Q)


def random_sparse(rng, m, n, density=0.5):
    mask = rng.random((m, n)) < density
    return SparseMatrix.from_dense(rng.standard_normal((m, n)), mask)


def low_rank_instance(m=100, n=60, rank=5, observed=0.5, noise=0.0, seed=0):
    """Observed entries of a rank ``rank`` matrix plus optional noise."""
    rng = np.random.default_rng(seed)
    dense = rng.standard_normal((m, rank)) @ rng.standard_normal((rank, n))
    dense += noise * rng.standard_normal((m, n))
    mask = rng.random((m, n)) < observed
    return SparseMatrix.from_dense(dense, mask), dense
