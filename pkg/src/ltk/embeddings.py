"""Conditional mean embedding of surrogates and the chi(x, d) feature vector.

The first stage regresses the surrogate feature map on (G, X, D') over all n
fused rows::

    beta(x, d) = (K_GG * K_XX * K_D'D' + n lam1 I)^{-1} (K_G0 * K_Xx * K_D'd)

so that ``mu_m(0, x, d) = sum_i beta_i(x, d) phi(M_i)``. The vector that the
outcome stage consumes is ``chi(x, d) = K_Xx * (K_MM beta(x, d))``.

Rows with G = 1 carry the fill value D' = 0. They sit in their own block of
the first-stage system (K_GG is a group mask) and the K_G0 mask zeroes their
targets, so the fill value never reaches an estimate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _accel
from .kernels import DIRAC, KernelSet, as_points, gram
from .ridge import RidgeSystem


@dataclass(frozen=True, eq=False)
class ChiVector:
    values: np.ndarray
    x: np.ndarray
    d: float


class FusedGrams:
    """Gram matrices of one fused dataset under one kernel set.

    ``K_gg`` is the indicator kernel on G, i.e. a same-group mask.
    """

    def __init__(self, dataset, kernels: KernelSet):
        self.dataset = dataset
        self.kernels = kernels
        self.n = dataset.n
        g = dataset.g
        self.g0 = (g == 0).astype(float)
        self.g1 = (g == 1).astype(float)
        self.K_gg = (g[:, None] == g[None, :]).astype(float)
        self.K_xx = gram(kernels.x, dataset.x)
        self.K_dd = gram(kernels.d, dataset.d)
        self.K_mm = gram(kernels.m, dataset.m)
        self._K_yy = None

    @property
    def K_yy(self) -> np.ndarray:
        if self._K_yy is None:
            self._K_yy = gram(self.kernels.y, self.dataset.y)
        return self._K_yy

    @property
    def first_stage_gram(self) -> np.ndarray:
        """K_GG * K_XX * K_D'D'."""
        return self.K_gg * self.K_xx * self.K_dd

    @property
    def outcome_gram(self) -> np.ndarray:
        """K_GG * K_XX * K_MM."""
        return self.K_gg * self.K_xx * self.K_mm

    def first_stage_groups(self) -> np.ndarray:
        """Row labels that make the first-stage Gram block diagonal."""
        if self.kernels.d.family == DIRAC:
            return 2 * np.unique(self.dataset.d, return_inverse=True)[1] + self.dataset.g
        return self.dataset.g


class EmbeddingModel:
    """First-stage factorisation plus cached Gram matrices for one dataset.

    Parameters
    ----------
    dataset : FusedDataset
    kernels : KernelSet
        Kernels for X, D and M (the outcome kernel is only used by callers).
    lam1 : float
        First-stage ridge penalty.
    grams : FusedGrams, optional
        Reuse Gram matrices that were already built (e.g. during tuning).
    """

    def __init__(self, dataset, kernels: KernelSet, lam1: float, grams: FusedGrams | None = None):
        if grams is None:
            grams = FusedGrams(dataset, kernels)
        self.grams = grams
        self.dataset = dataset
        self.kernels = kernels
        self.lam1 = float(lam1)
        self.n = dataset.n
        self.g0 = grams.g0
        self.g1 = grams.g1
        self.K_xx = grams.K_xx
        self.K_mm = grams.K_mm
        self.system = RidgeSystem(grams.first_stage_gram, self.lam1,
                                  groups=grams.first_stage_groups())
        self._q = None

    # -- kernel columns ----------------------------------------------------

    def k_x(self, x_points) -> np.ndarray:
        """(n, m) matrix of k_X(X_i, x_j)."""
        return gram(self.kernels.x, self.dataset.x, as_points(x_points))

    def k_d(self, d) -> np.ndarray:
        """(n,) vector of k_D(D'_i, d)."""
        return gram(self.kernels.d, self.dataset.d, np.array([[float(d)]]))[:, 0]

    def first_stage_targets(self, x_points, d) -> np.ndarray:
        """(n, m) matrix with columns K_G0 * K_Xx * K_D'd."""
        return (self.g0 * self.k_d(d))[:, None] * self.k_x(x_points)

    # -- queries -----------------------------------------------------------

    def coefficients(self, x, d) -> np.ndarray:
        """beta(x, d) for a single covariate point."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return self.system.solve(self.first_stage_targets(x[None, :], d))[:, 0]

    def coefficients_batch(self, x_points, d) -> np.ndarray:
        return self.system.solve(self.first_stage_targets(x_points, d))

    def chi(self, x, d) -> ChiVector:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        kx = self.k_x(x[None, :])[:, 0]
        beta = self.coefficients(x, d)
        return ChiVector(kx * (self.K_mm @ beta), x, float(d))

    def chi_batch(self, x_points, d) -> np.ndarray:
        """(n, m) matrix whose column j is chi(x_j, d)."""
        kx = self.k_x(x_points)
        beta = self.system.solve((self.g0 * self.k_d(d))[:, None] * kx)
        return kx * (self.K_mm @ beta)

    # -- averaged chi ------------------------------------------------------

    @property
    def surrogate_smoother(self) -> np.ndarray:
        """Q = K_MM (first-stage system)^{-1}, computed once."""
        if self._q is None:
            # the system matrix is symmetric, so A^{-1} K_MM = Q^T
            self._q = np.ascontiguousarray(self.system.solve(self.K_mm).T)
        return self._q

    def averaging_operator(self, x_points=None, index=None) -> np.ndarray:
        """Matrix P with mean_j chi(x_j, d) = P @ (K_G0 * K_D'd).

        ``P = Q * (K_XS K_XS^T) / |S|`` where ``K_XS`` holds kernel columns of
        the averaging points: external ``x_points``, or the dataset's own rows
        selected by ``index`` (all rows when both are ``None``).
        """
        if x_points is not None:
            kxs = self.k_x(x_points)
        elif index is not None:
            kxs = self.K_xx[:, np.asarray(index)]
        else:
            kxs = self.K_xx
        T = kxs @ kxs.T
        return self.surrogate_smoother * T / kxs.shape[1]

    def mean_chi(self, d, x_points=None, operator=None) -> np.ndarray:
        if operator is None:
            operator = self.averaging_operator(x_points)
        return operator @ (self.g0 * self.k_d(d))

    def partial_means(self, weights, x_points, d) -> np.ndarray:
        """``weights^T chi(x_j, d)`` for every point x_j, without forming chi.

        Used for nu-hat: with weights = (outcome weights) * K_G1 this is the
        long-term regression averaged over the surrogate embedding at x_j.
        """
        kx = self.k_x(x_points)
        left = np.asarray(weights, dtype=float)[:, None] * kx
        targets = (self.g0 * self.k_d(d))[:, None] * kx
        if self._q is not None:
            right = self._q @ targets
        else:
            # K_MM A^{-1} B costs one solve with |x_points| columns instead of n
            right = self.K_mm @ self.system.solve(targets)
        return _accel.column_dots(np.ascontiguousarray(left), np.ascontiguousarray(right))
