import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ltk import kernels as kn
from ltk import ridge
from ltk.errors import NumericalError, TuningError, ValidationError
from oracles import loo_refit, loo_refit_kernel_target


def _psd(rng, n, rank=None):
    A = rng.normal(size=(n, rank or n))
    return A @ A.T / (rank or n)


def _gauss(rng, n, p=2, ls=1.0):
    return kn.gram(kn.KernelSpec.gaussian([ls] * p), rng.normal(size=(n, p)))


def test_solve_identity():
    np.testing.assert_allclose(ridge.solve_ridge(np.eye(2), [1.0, 1.0], 0.5), [0.5, 0.5])


def test_solve_scalar():
    np.testing.assert_allclose(ridge.solve_ridge([[1.0]], [2.0], 1.0), [1.0])


def test_solve_matches_inverse(rng):
    K = _psd(rng, 10)
    b = rng.normal(size=(10, 3))
    ref = np.linalg.inv(K + 10 * 0.01 * np.eye(10)) @ b
    np.testing.assert_allclose(ridge.solve_ridge(K, b, 0.01), ref, atol=1e-8)


def test_solve_rejects_bad_penalty():
    for lam in (0.0, -1.0, np.nan):
        with pytest.raises(ValidationError):
            ridge.RidgeSystem(np.eye(2), lam)


def test_jitter_retry_recovers():
    # indefinite by a hair: fails plain Cholesky, passes after jitter
    K = np.eye(3)
    K[2, 2] = -3.0 * 1e-12 - 1e-13
    sys_ = ridge.RidgeSystem(K, 1e-12)
    assert sys_.jitter > 0


def test_jitter_retry_gives_up():
    with pytest.raises(NumericalError):
        ridge.RidgeSystem(-np.eye(3), 0.1)


def test_blockwise_matches_dense(rng):
    g = (rng.random(30) < 0.5).astype(int)
    K = _gauss(rng, 30) * (g[:, None] == g[None, :])
    b = rng.normal(size=30)
    np.testing.assert_allclose(ridge.RidgeSystem(K, 0.01, groups=g).solve(b),
                               ridge.RidgeSystem(K, 0.01).solve(b), atol=1e-10)


def test_loocv_identity():
    assert ridge.loocv_score(np.eye(2), [1.0, -1.0], 0.5) == pytest.approx(1.0, abs=1e-15)


def test_loocv_zero_target(rng):
    assert ridge.loocv_score(_psd(rng, 6), np.zeros(6), 0.1) == 0.0


def test_loocv_matches_refits(rng):
    for _ in range(5):
        K, y = _gauss(rng, 30), rng.normal(size=30)
        lam = 10 ** rng.uniform(-4, 0)
        assert ridge.loocv_score(K, y, lam) == pytest.approx(loo_refit(K, y, lam), abs=1e-8)


def test_loocv_kernel_target_matches_refits(rng):
    K, T = _gauss(rng, 25), _gauss(rng, 25, ls=0.8)
    for lam in (1e-3, 1e-1):
        got = ridge.loocv_score(K, lam=lam, target_gram=T)
        assert got == pytest.approx(loo_refit_kernel_target(K, T, lam), abs=1e-8)


def test_loocv_needs_exactly_one_target():
    with pytest.raises(ValidationError):
        ridge.loocv_score(np.eye(2), [1, 1], 1.0, target_gram=np.eye(2))
    with pytest.raises(ValidationError):
        ridge.loocv_score(np.eye(2), None, 1.0)


def test_path_matches_direct_scores(rng):
    K, y = _gauss(rng, 40), rng.normal(size=40)
    grid = ridge.default_grid(K, 8)
    np.testing.assert_allclose(ridge.loocv_path(K, y, grid),
                               [ridge.loocv_score(K, y, lam) for lam in grid], rtol=1e-9)


def test_path_blocks_and_low_rank(rng):
    # big enough to take the pivoted-Cholesky route inside each block
    n = 600
    g = (rng.random(n) < 0.5).astype(int)
    K = _gauss(rng, n, p=1) * (g[:, None] == g[None, :])
    y = rng.normal(size=n)
    grid = ridge.default_grid(K, 6)
    spec = ridge.Spectrum(K, g)
    assert all(V.shape[1] < len(idx) for idx, _, V in spec.blocks)
    np.testing.assert_allclose(spec.loocv_path(y, grid),
                               [ridge.loocv_score(K, y, lam) for lam in grid], rtol=1e-8)
    np.testing.assert_allclose(spec.solve(y, grid[2]), ridge.solve_ridge(K, y, grid[2]),
                               atol=1e-8)


def test_path_kernel_target_matches_direct(rng):
    g = (rng.random(50) < 0.5).astype(int)
    mask = g[:, None] == g[None, :]
    K, T = _gauss(rng, 50) * mask, _gauss(rng, 50, ls=0.7)
    grid = ridge.default_grid(K, 5)
    np.testing.assert_allclose(
        ridge.loocv_path(K, grid=grid, groups=g, target_gram=T),
        [ridge.loocv_score(K, lam=lam, target_gram=T) for lam in grid], rtol=1e-8)


def test_default_grid():
    grid = ridge.default_grid(2.0 * np.eye(4))
    assert grid.size == 20
    assert grid[0] == pytest.approx(2e-6) and grid[-1] == pytest.approx(2.0)


@pytest.mark.parametrize("grid", [[], [1.0, 1.0], [2.0, 1.0], [-1.0, 1.0], [np.inf]])
def test_grid_validated(grid):
    with pytest.raises(ValidationError):
        ridge.check_grid(grid)


def test_tune_singleton(rng):
    assert ridge.tune_lambda(_psd(rng, 5), rng.normal(size=5), [0.3]) == 0.3


def test_tune_tie_goes_to_larger(rng):
    assert ridge.tune_lambda(_psd(rng, 5), np.zeros(5), [1e-3, 1e-1]) == 1e-1


@pytest.mark.filterwarnings("ignore:overflow encountered")
def test_tune_all_degenerate():
    # n*lam / (e + n*lam) underflows, so every diagonal entry of H is 0
    K = 1e308 * np.eye(2)
    with pytest.raises(TuningError):
        ridge.tune_lambda(K, [1.0, 2.0], [1e-300, 1e-299])
    with pytest.raises(NumericalError):
        ridge.loocv_score(K, [1.0, 2.0], 1e-300)


def test_path_accurate_when_penalty_is_tiny():
    K = 1e20 * np.eye(2)
    assert ridge.loocv_path(K, [1.0, 2.0], [1e-12])[0] == pytest.approx(2.5, rel=1e-12)


def test_tuned_penalty_close_to_cv_optimum():
    rng = np.random.default_rng(5)
    x = rng.uniform(-3, 3, 300)
    f = lambda t: np.sin(1.5 * t) + 0.3 * t  # noqa: E731
    y = f(x) + 0.3 * rng.normal(size=300)
    spec = kn.KernelSpec.gaussian(kn.median_heuristic(x))
    K = kn.gram(spec, x)
    grid = ridge.default_grid(K)
    chosen = ridge.tune_lambda(K, y, grid)
    # independent oracle: 5-fold CV held-out MSE, each fold refit with its own n
    folds = np.arange(300) % 5
    cv = []
    for lam in grid:
        err = 0.0
        for f_ in range(5):
            tr, te = folds != f_, folds == f_
            a = ridge.solve_ridge(K[np.ix_(tr, tr)], y[tr], lam)
            err += np.sum((y[te] - K[np.ix_(te, tr)] @ a) ** 2)
        cv.append(err / 300)
    cv = np.array(cv)
    assert cv[list(grid).index(chosen)] <= 1.05 * cv.min()


# -- properties ------------------------------------------------------------

@settings(max_examples=40, deadline=None)
@given(st.integers(2, 15), st.integers(0, 10_000))
def test_shrinkage_monotone(n, seed):
    rng = np.random.default_rng(seed)
    K, y = _psd(rng, n), rng.normal(size=n)
    norms = [np.linalg.norm(K @ ridge.solve_ridge(K, y, lam)) for lam in np.logspace(-4, 2, 8)]
    assert all(b < a for a, b in zip(norms, norms[1:]))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 15), st.integers(0, 10_000), st.floats(1e-4, 10.0))
def test_solve_recovers_v(n, seed, lam):
    rng = np.random.default_rng(seed)
    K, v = _psd(rng, n), rng.normal(size=n)
    b = (K + n * lam * np.eye(n)) @ v
    np.testing.assert_allclose(ridge.solve_ridge(K, b, lam), v, atol=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 15), st.integers(0, 10_000), st.floats(1e-4, 10.0))
def test_solve_residual_bound(n, seed, lam):
    rng = np.random.default_rng(seed)
    K, b = _psd(rng, n), rng.normal(size=n)
    a = ridge.solve_ridge(K, b, lam)
    resid = (K + n * lam * np.eye(n)) @ a - b
    cond = np.linalg.cond(K + n * lam * np.eye(n))
    assert np.linalg.norm(resid) <= 1e-12 * cond * max(1.0, np.linalg.norm(b))


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 12), st.integers(0, 10_000))
def test_loocv_permutation_invariant(n, seed):
    rng = np.random.default_rng(seed)
    K, y = _psd(rng, n), rng.normal(size=n)
    perm = rng.permutation(n)
    a = ridge.loocv_score(K, y, 0.05)
    b = ridge.loocv_score(K[np.ix_(perm, perm)], y[perm], 0.05)
    assert b == pytest.approx(a, rel=1e-9)
