"""Compiled inner loops with a pure-numpy fallback.

Every kernel here has two implementations with identical semantics: a numba
``@njit`` version and a vectorised numpy version. The numba path is used when
numba imports cleanly and ``LTK_DISABLE_NUMBA`` is unset (or ``0``/``false``).
Both are always importable so they can be tested and benchmarked side by side.
"""

import os

import numpy as np

try:
    import numba
    from numba import njit, prange
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None


def _numba_requested():
    flag = os.environ.get("LTK_DISABLE_NUMBA", "").strip().lower()
    return flag in ("", "0", "false", "no", "off")


HAVE_NUMBA = numba is not None
if HAVE_NUMBA and "NUMBA_THREADING_LAYER_PRIORITY" not in os.environ:
    # probing an outdated TBB first only produces a warning; try it last
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
USE_NUMBA = HAVE_NUMBA and _numba_requested()
BACKEND = "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------

def gaussian_gram_numpy(A, B, inv_ls):
    """exp(-0.5 * sum_j ((A_ij - B_kj) * inv_ls_j)**2) for all (i, k)."""
    sq = np.zeros((A.shape[0], B.shape[0]))
    for j in range(A.shape[1]):
        diff = (A[:, j, None] - B[None, :, j]) * inv_ls[j]
        sq += diff * diff
    return np.exp(-0.5 * sq)


def dirac_gram_numpy(A, B):
    out = np.ones((A.shape[0], B.shape[0]))
    for j in range(A.shape[1]):
        out *= A[:, j, None] == B[None, :, j]
    return out


def abs_pair_diffs_numpy(col):
    """|col[i] - col[k]| for i < k, in row-major pair order."""
    i, k = np.triu_indices(col.shape[0], k=1)
    return np.abs(col[i] - col[k])


def column_dots_numpy(U, W):
    """Column-wise inner products sum_i U[i, j] * W[i, j]."""
    return np.einsum("ij,ij->j", U, W)


def herd_numpy(target, grid, inv_ls, m):
    """Greedy herding indices on a sorted 1-D grid.

    Step j (1-based) picks argmax of ``target - rep / (j + 1)`` where ``rep``
    accumulates k(chosen, grid) over the previous picks. ``np.argmax`` returns
    the first maximiser, i.e. the smallest grid value on ties.
    """
    rep = np.zeros(grid.shape[0])
    out = np.empty(m, dtype=np.int64)
    for j in range(1, m + 1):
        idx = int(np.argmax(target - rep / (j + 1)))
        out[j - 1] = idx
        diff = (grid - grid[idx]) * inv_ls
        rep += np.exp(-0.5 * diff * diff)
    return out


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(parallel=True, cache=True)
    def gaussian_gram_numba(A, B, inv_ls):
        n, p = A.shape
        m = B.shape[0]
        out = np.empty((n, m))
        for i in prange(n):
            for k in range(m):
                sq = 0.0
                for j in range(p):
                    diff = (A[i, j] - B[k, j]) * inv_ls[j]
                    sq += diff * diff
                out[i, k] = np.exp(-0.5 * sq)
        return out

    @njit(parallel=True, cache=True)
    def dirac_gram_numba(A, B):
        n, p = A.shape
        m = B.shape[0]
        out = np.empty((n, m))
        for i in prange(n):
            for k in range(m):
                same = 1.0
                for j in range(p):
                    if A[i, j] != B[k, j]:
                        same = 0.0
                        break
                out[i, k] = same
        return out

    @njit(cache=True)
    def abs_pair_diffs_numba(col):
        n = col.shape[0]
        out = np.empty(n * (n - 1) // 2)
        t = 0
        for i in range(n):
            for k in range(i + 1, n):
                out[t] = abs(col[i] - col[k])
                t += 1
        return out

    @njit(cache=True)
    def column_dots_numba(U, W):
        # row-major sweep keeps both C-ordered inputs contiguous
        n, m = U.shape
        out = np.zeros(m)
        for i in range(n):
            for j in range(m):
                out[j] += U[i, j] * W[i, j]
        return out

    @njit(cache=True)
    def herd_numba(target, grid, inv_ls, m):
        g = grid.shape[0]
        rep = np.zeros(g)
        out = np.empty(m, dtype=np.int64)
        for j in range(1, m + 1):
            best = 0
            best_val = target[0] - rep[0] / (j + 1)
            for t in range(1, g):
                val = target[t] - rep[t] / (j + 1)
                if val > best_val:
                    best_val = val
                    best = t
            out[j - 1] = best
            for t in range(g):
                diff = (grid[t] - grid[best]) * inv_ls
                rep[t] += np.exp(-0.5 * diff * diff)
        return out

else:  # pragma: no cover
    gaussian_gram_numba = None
    dirac_gram_numba = None
    abs_pair_diffs_numba = None
    column_dots_numba = None
    herd_numba = None


if USE_NUMBA:
    gaussian_gram = gaussian_gram_numba
    dirac_gram = dirac_gram_numba
    abs_pair_diffs = abs_pair_diffs_numba
    column_dots = column_dots_numba
    herd_indices = herd_numba
else:
    gaussian_gram = gaussian_gram_numpy
    dirac_gram = dirac_gram_numpy
    abs_pair_diffs = abs_pair_diffs_numpy
    column_dots = column_dots_numpy
    herd_indices = herd_numpy


def set_threads(count):
    """Cap numba's worker pool; no-op on the numpy backend."""
    if USE_NUMBA and count:
        numba.set_num_threads(max(1, min(int(count), numba.config.NUMBA_NUM_THREADS)))
