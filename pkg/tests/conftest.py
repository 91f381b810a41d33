import numpy as np
import pytest

from mtlssvm.core import MtlDataset, preprocess


def random_dataset(rng, k=2, m=2, p=6, counts=None, shift=1.0):
    """Gaussian blocks with random class means (raw, unprocessed)."""
    if counts is None:
        counts = rng.integers(2, 5, size=(k, m))
    counts = np.asarray(counts)
    blocks = []
    for i in range(k):
        row = []
        for j in range(m):
            mu = shift * rng.standard_normal(p)
            row.append(mu[:, None] + rng.standard_normal((p, counts[i, j])))
        blocks.append(row)
    return MtlDataset(blocks)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_dataset(rng):
    return preprocess(random_dataset(rng, counts=[[3, 2], [2, 3]]))



# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
