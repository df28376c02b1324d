"""Regularised SPD solves and closed-form leave-one-out penalty tuning.

Every ridge system in the package has the form ``K + n * lam * I`` where ``n``
is the number of rows of ``K``. For such a system the smoother residual matrix
is ``H = I - K (K + n lam I)^{-1} = n lam (K + n lam I)^{-1}``, and the
leave-one-out residuals are ``(H y)_i / H_ii``.
"""

from __future__ import annotations

import numpy as np
from scipy import linalg
from scipy.linalg import lapack

from .errors import NumericalError, TuningError, ValidationError

JITTER = 1e-10
GRID_SIZE = 20
GRID_RANGE = (1e-6, 1.0)
# blocks larger than this are first probed for low numerical rank
LOW_RANK_MIN_SIZE = 200
LOW_RANK_FRACTION = 0.5
H_FLOOR = np.finfo(float).tiny
# columns per batched product in the LOOCV path
PATH_CHUNK = 512


def _check_square(K):
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValidationError(f"kernel matrix must be square, got shape {K.shape}")
    return K


def _check_lambda(lam):
    lam = float(lam)
    if not (np.isfinite(lam) and lam > 0):
        raise ValidationError(f"ridge penalty must be positive, got {lam}")
    return lam


class RidgeSystem:
    """Cholesky factorisation of ``K + n * lam * I``.

    If the first factorisation fails, ``1e-10 * trace(K) / n`` is added to the
    diagonal and it is tried once more before raising ``NumericalError``.
    With ``groups`` (rows with different labels have zero kernel) each diagonal
    block is factorised on its own; the penalty still uses the full ``n``.
    """

    def __init__(self, K, lam, groups=None):
        K = _check_square(K)
        lam = _check_lambda(lam)
        n = K.shape[0]
        self.n = n
        self.lam = lam
        self.jitter = 0.0
        self._blocks = []
        for idx in _blocks(n, groups):
            A = K[np.ix_(idx, idx)] if groups is not None else K.copy()
            A[np.diag_indices_from(A)] += n * lam
            self._blocks.append((idx, self._factor(A, K, idx)))

    def _factor(self, A, K, idx):
        try:
            return linalg.cho_factor(A, lower=True, check_finite=True)
        except (linalg.LinAlgError, ValueError):
            self.jitter = JITTER * np.trace(K) / self.n
            A[np.diag_indices_from(A)] += self.jitter
            try:
                return linalg.cho_factor(A, lower=True)
            except linalg.LinAlgError as exc:
                raise NumericalError(
                    f"K + n*lam*I is not positive definite (n={self.n}, lam={self.lam:g})"
                ) from exc

    def solve(self, b) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if len(self._blocks) == 1:
            return linalg.cho_solve(self._blocks[0][1], b, check_finite=False)
        out = np.empty_like(b)
        for idx, cho in self._blocks:
            out[idx] = linalg.cho_solve(cho, b[idx], check_finite=False)
        return out


def solve_ridge(K, targets, lam) -> np.ndarray:
    """``(K + n lam I)^{-1} targets`` for a vector or an (n, k) matrix."""
    targets = np.asarray(targets, dtype=float)
    K = _check_square(K)
    if targets.shape[0] != K.shape[0]:
        raise ValidationError("targets must have one row per row of K")
    return RidgeSystem(K, lam).solve(targets)


def _loo_score_from_inverse(Ainv, y, target_gram):
    h = np.diag(Ainv)
    if np.any(np.abs(h) <= np.finfo(float).tiny):
        raise NumericalError("degenerate smoother: zero diagonal entry of H")
    n = Ainv.shape[0]
    if target_gram is not None:
        # (H K_T H)_ii / H_ii^2 with the common n*lam factor cancelled
        num = np.einsum("ij,jk,ik->i", Ainv, target_gram, Ainv)
        return float(np.sum(num / h ** 2) / n)
    r = Ainv @ y
    if r.ndim == 1:
        r = r[:, None]
    return float(np.sum((r / h[:, None]) ** 2) / n)


def loocv_score(K, y=None, lam=1.0, target_gram=None) -> float:
    """Closed-form leave-one-out loss ``(1/n) ||diag(H)^{-1} H y||^2``.

    ``y`` may be a vector or an (n, k) matrix (losses summed over columns).
    For an RKHS-valued response pass its Gram matrix as ``target_gram`` instead;
    the loss is then the squared RKHS norm of the held-out residual.

    Raises
    ------
    NumericalError
        If a diagonal entry of ``H`` is zero.
    """
    K = _check_square(K)
    lam = _check_lambda(lam)
    if (y is None) == (target_gram is None):
        raise ValidationError("pass exactly one of y or target_gram")
    n = K.shape[0]
    if y is not None:
        y = np.asarray(y, dtype=float)
        if y.shape[0] != n:
            raise ValidationError("y must have one entry per row of K")
    else:
        target_gram = _check_square(target_gram)
    sys = RidgeSystem(K, lam)
    Ainv = sys.solve(np.eye(n))
    return _loo_score_from_inverse(Ainv, y, target_gram)


def default_grid(K=None, size: int = GRID_SIZE) -> np.ndarray:
    """Log-spaced penalties on [1e-6, 1], scaled by ``trace(K) / n``."""
    scale = 1.0 if K is None else float(np.trace(K)) / K.shape[0]
    return np.logspace(np.log10(GRID_RANGE[0]), np.log10(GRID_RANGE[1]), size) * scale


def check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float).ravel()
    if grid.size == 0:
        raise ValidationError("tuning grid is empty")
    if not np.all(np.isfinite(grid) & (grid > 0)):
        raise ValidationError("tuning grid values must be positive and finite")
    if np.any(np.diff(grid) <= 0):
        raise ValidationError("tuning grid must be strictly increasing")
    return grid


def _blocks(n, groups):
    if groups is None:
        return [np.arange(n)]
    groups = np.asarray(groups)
    if groups.shape != (n,):
        raise ValidationError("groups must label every row of K")
    return [np.flatnonzero(groups == v) for v in np.unique(groups)]


def _low_rank_factor(T):
    """Thin ``F`` with ``F F^T = T`` up to rounding; the LOOCV loss only needs some such factor."""
    L, piv, rank, info = lapack.dpstrf(T, lower=1)
    if info == 0:
        rank = T.shape[0]
    F = np.zeros((T.shape[0], rank))
    F[piv - 1] = np.tril(L)[:, :rank]
    return F


def _block_eigen(B):
    """Nonzero eigenpairs of a PSD block.

    Smooth kernels often have numerical rank far below the block size; a
    pivoted Cholesky run to machine precision detects that cheaply, and the
    eigenpairs then come from a thin SVD of the factor.
    """
    m = B.shape[0]
    if m > LOW_RANK_MIN_SIZE:
        F = _low_rank_factor(B)
        if F.shape[1] < LOW_RANK_FRACTION * m:
            U, sv, _ = linalg.svd(F, full_matrices=False, check_finite=False)
            return sv ** 2, U
    e, V = np.linalg.eigh(B)
    return np.clip(e, 0.0, None), V


class Spectrum:
    """Blockwise eigendecomposition of a PSD kernel matrix.

    Only eigenpairs with nonzero eigenvalue are kept, so ``V`` may be thin. It
    serves every penalty at once: LOOCV paths and ridge solves for any ``lam``.

    Parameters
    ----------
    K : (n, n) ndarray
    groups : array_like, optional
        Row labels such that ``K`` vanishes between different labels.
    """

    def __init__(self, K, groups=None):
        K = _check_square(K)
        self.n = K.shape[0]
        self.trace = float(np.trace(K))
        self.blocks = []
        for idx in _blocks(self.n, groups):
            e, V = _block_eigen(K[np.ix_(idx, idx)])
            self.blocks.append((idx, e, V))

    def solve(self, b, lam) -> np.ndarray:
        """``(K + n lam I)^{-1} b``."""
        lam = _check_lambda(lam)
        b = np.asarray(b, dtype=float)
        mu = self.n * lam
        out = np.empty_like(b)
        for idx, e, V in self.blocks:
            bi = b[idx]
            c = V.T @ bi
            shrink = e / (e + mu)
            c = (shrink[:, None] * c) if c.ndim == 2 else shrink * c
            out[idx] = (bi - V @ c) / mu
        return out

    def loocv_path(self, y=None, grid=None, target_gram=None) -> np.ndarray:
        """LOOCV loss at every penalty of ``grid``; degenerate penalties score ``inf``."""
        n = self.n
        grid = check_grid(grid)
        if (y is None) == (target_gram is None):
            raise ValidationError("pass exactly one of y or target_gram")
        if y is not None:
            y = np.asarray(y, dtype=float)
            if y.shape[0] != n:
                raise ValidationError("y must have one entry per row of K")
            Y = y[:, None] if y.ndim == 1 else y
        else:
            target_gram = _check_square(target_gram)
        totals = np.zeros(grid.size)
        for idx, e, V in self.blocks:
            V2 = V * V
            Z = Y[idx] if y is not None else _low_rank_factor(target_gram[np.ix_(idx, idx)])
            C = V.T @ Z
            # H = P0 + V diag(s) V^T on this block, with s = n lam / (e + n lam) and
            # P0 the projector onto the null space dropped from a thin V
            thin = V.shape[1] < V.shape[0]
            h0 = 1.0 - V2.sum(axis=1) if thin else 0.0
            R0 = Z - V @ C if thin else 0.0
            S = (n * grid[None, :]) / (e[:, None] + n * grid[None, :])
            h = h0[:, None] + V2 @ S if thin else V2 @ S
            k = C.shape[1]
            step = max(1, PATH_CHUNK // k)
            for lo in range(0, grid.size, step):
                ts = range(lo, min(lo + step, grid.size))
                VW = V @ np.concatenate([S[:, t, None] * C for t in ts], axis=1)
                for j, t in enumerate(ts):
                    ht = h[:, t]
                    if np.any(ht <= H_FLOOR):
                        totals[t] = np.inf
                        continue
                    R = R0 + VW[:, j * k:(j + 1) * k]
                    totals[t] += np.sum(np.sum(R * R, axis=1) / ht ** 2)
        return totals / n


def loocv_path(K, y=None, grid=None, groups=None, target_gram=None,
               spectrum: Spectrum | None = None) -> np.ndarray:
    """LOOCV loss for every penalty in ``grid`` from one eigendecomposition.

    ``groups`` labels rows so that ``K`` is zero between different labels
    (true for any product with the indicator kernel on G); each block is
    decomposed separately while the penalty keeps the full-sample ``n``.
    Degenerate penalties score ``inf``.
    """
    if spectrum is None:
        spectrum = Spectrum(K, groups)
    if grid is None:
        grid = default_grid() * spectrum.trace / spectrum.n
    return spectrum.loocv_path(y, grid, target_gram)


def tune_lambda(K, y=None, grid=None, groups=None, target_gram=None,
                spectrum: Spectrum | None = None) -> float:
    """Grid penalty minimising the LOOCV loss; ties go to the larger penalty.

    Pass a precomputed ``spectrum`` (then ``K`` may be ``None``) to share one
    decomposition between several regressions on the same Gram matrix.
    """
    if spectrum is None:
        spectrum = Spectrum(K, groups)
    if grid is None:
        grid = default_grid(size=GRID_SIZE) * spectrum.trace / spectrum.n
    grid = check_grid(grid)
    scores = spectrum.loocv_path(y, grid, target_gram)
    if not np.any(np.isfinite(scores)):
        raise TuningError("every penalty in the tuning grid gave a degenerate smoother")
    best = np.min(scores)
    return float(grid[np.flatnonzero(scores == best)[-1]])
