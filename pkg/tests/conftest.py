import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from ltk import KernelSet, KernelSpec  # noqa: E402
from ltk.data import FusedDataset  # noqa: E402
from report import LINES  # noqa: E402


def random_fused(rng, n, p=2, q=2, binary=False):
    """Small random fused dataset with both groups present."""
    g = np.zeros(n, dtype=int)
    g[rng.permutation(n)[: max(1, n // 2)]] = 1
    if g.sum() == n:
        g[0] = 0
    x = rng.normal(size=(n, p))
    d = rng.integers(0, 2, size=n).astype(float) if binary else rng.normal(size=n)
    m = rng.normal(size=(n, q))
    y = rng.normal(size=n)
    return FusedDataset.from_arrays(g, x, np.where(g == 0, d, 0.0), m, np.where(g == 1, y, 0.0),
                                    "binary" if binary else "continuous")


def random_kernels(rng, p=2, q=2, binary=False):
    ls = lambda k: rng.uniform(0.5, 2.0, size=k)  # noqa: E731
    d = KernelSpec.dirac() if binary else KernelSpec.gaussian(ls(1))
    return KernelSet(KernelSpec.gaussian(ls(p)), d, KernelSpec.gaussian(ls(q)),
                     KernelSpec.gaussian(ls(1)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240)


def pytest_terminal_summary(terminalreporter):
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
