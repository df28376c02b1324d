import os
import subprocess
import sys

import numpy as np
import pytest

from ltk import _accel

needs_numba = pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba not installed")


@needs_numba
def test_gaussian_gram_backends_agree(rng):
    A, B = rng.normal(size=(30, 3)), rng.normal(size=(17, 3))
    inv = 1.0 / rng.uniform(0.5, 2.0, size=3)
    np.testing.assert_allclose(_accel.gaussian_gram_numba(A, B, inv),
                               _accel.gaussian_gram_numpy(A, B, inv), rtol=1e-13, atol=1e-15)


@needs_numba
def test_dirac_gram_backends_agree(rng):
    A = rng.integers(0, 3, size=(25, 2)).astype(float)
    B = rng.integers(0, 3, size=(9, 2)).astype(float)
    np.testing.assert_array_equal(_accel.dirac_gram_numba(A, B), _accel.dirac_gram_numpy(A, B))


@needs_numba
def test_pair_diffs_backends_agree(rng):
    col = rng.normal(size=40)
    np.testing.assert_array_equal(_accel.abs_pair_diffs_numba(col),
                                  _accel.abs_pair_diffs_numpy(col))


@needs_numba
def test_column_dots_backends_agree(rng):
    U, W = rng.normal(size=(50, 7)), rng.normal(size=(50, 7))
    np.testing.assert_allclose(_accel.column_dots_numba(U, W),
                               _accel.column_dots_numpy(U, W), rtol=1e-12)


@needs_numba
def test_herding_backends_agree(rng):
    grid = np.linspace(-3, 3, 300)
    target = np.exp(-0.5 * (grid - 0.4) ** 2) + 0.5 * np.exp(-0.5 * ((grid + 1.5) / 0.4) ** 2)
    np.testing.assert_array_equal(_accel.herd_numba(target, grid, 2.0, 80),
                                  _accel.herd_numpy(target, grid, 2.0, 80))


def test_backend_flag(monkeypatch):
    monkeypatch.setenv("LTK_DISABLE_NUMBA", "1")
    assert not _accel._numba_requested()
    monkeypatch.setenv("LTK_DISABLE_NUMBA", "0")
    assert _accel._numba_requested()
    monkeypatch.delenv("LTK_DISABLE_NUMBA")
    assert _accel._numba_requested()


def test_numpy_backend_in_subprocess():
    code = "from ltk import _accel; print(_accel.BACKEND)"
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                         env={**os.environ, "LTK_DISABLE_NUMBA": "1"}, check=True)
    assert out.stdout.strip() == "numpy"
