"""Debiased estimation of long-term treatment effects for a binary treatment.

The estimator averages the multiply robust moment

    psi(W) = nu(X) + alpha(W) (Y' - delta(W)) + eta(W) (delta(W) - nu(X))

over held-out folds, with every nuisance fitted by kernel ridge regression
on the complement of the fold. The treatment kernel is the indicator kernel.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.stats import norm

from .data import BINARY, split_folds
from .embeddings import EmbeddingModel, FusedGrams
from .errors import ValidationError
from .kernels import KernelSet, KernelSpec, fit_kernels, gram
from .ridge import Spectrum, tune_lambda

log = logging.getLogger(__name__)

DEFAULT_EPSILON = 0.01
DEFAULT_FOLDS = 5
PENALTY_NAMES = ("lambda", "lambda1", "lambda3", "lambda4", "lambda5", "lambda6")


def censor(p, epsilon):
    return np.clip(p, epsilon, 1.0 - epsilon)


@dataclass(frozen=True)
class NuisanceSet:
    """Fitted (or oracle) nuisance functions for one treatment value ``d``.

    All callables are vectorised over rows: ``x`` is (k, p) and ``m`` is (k, q).
    ``pi`` and ``rho`` return P(D = d | G = 0, ...), ``pi_prime`` and
    ``rho_prime`` return P(G = 1 | ...); all four are already censored into
    ``[epsilon, 1 - epsilon]``.
    """

    nu: Callable
    gamma: Callable
    pi: Callable
    rho: Callable
    pi_prime: Callable
    rho_prime: Callable
    d: float
    epsilon: float = DEFAULT_EPSILON
    penalties: dict = field(default_factory=dict)

    def replace(self, **changes) -> "NuisanceSet":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class Rows:
    """Plain column view of some fused rows; no group-coverage validation."""

    g: np.ndarray
    x: np.ndarray
    d: np.ndarray
    m: np.ndarray
    y: np.ndarray

    @classmethod
    def take(cls, ds, idx) -> "Rows":
        return cls(ds.g[idx], ds.x[idx], ds.d[idx], ds.m[idx], ds.y[idx])


def balancing_weights(rows, nuisances: NuisanceSet):
    """(alpha, eta) evaluated at ``rows``; exact zeros off their supports."""
    pi = nuisances.pi(rows.x)
    rho = nuisances.rho(rows.x, rows.m)
    pi_p1 = nuisances.pi_prime(rows.x)
    rho_p1 = nuisances.rho_prime(rows.x, rows.m)
    g1 = rows.g == 1
    g0_d = (rows.g == 0) & (rows.d == nuisances.d)
    denom = pi * (1.0 - pi_p1)
    alpha = np.where(g1, rho * (1.0 - rho_p1) / (rho_p1 * denom), 0.0)
    eta = np.where(g0_d, 1.0 / denom, 0.0)
    return alpha, eta


def moment_values(rows, nuisances: NuisanceSet) -> np.ndarray:
    """Per-row moment psi; ``rows`` is a FusedDataset or :class:`Rows`."""
    nu = nuisances.nu(rows.x)
    delta = nuisances.gamma(rows.x, rows.m)
    alpha, eta = balancing_weights(rows, nuisances)
    return nu + alpha * (rows.y - delta) + eta * (delta - nu)


def _cross(spec: KernelSpec, train, pts):
    return gram(spec, train, pts)


def fit_nuisances(train, d, kernels: KernelSet | None = None, penalties: dict | None = None,
                  epsilon: float = DEFAULT_EPSILON, grid=None) -> NuisanceSet:
    """Kernel ridge estimates of every nuisance on ``train``.

    Parameters
    ----------
    train : FusedDataset
        Binary-treatment rows containing both groups.
    d : {0, 1}
    kernels : KernelSet, optional
        Defaults to median-heuristic kernels with the indicator kernel on D.
    penalties : dict, optional
        Fixed values for any of ``lambda, lambda1, lambda3..lambda6``; the rest
        are tuned by LOOCV on ``train``.
    """
    if d not in (0, 1):
        raise ValidationError(f"treatment value must be 0 or 1, got {d}")
    if kernels is None:
        kernels = fit_kernels(train, dirac_treatment=True, with_outcome=False)
    if kernels.d.family != "dirac":
        raise ValidationError("semiparametric nuisances need the indicator kernel on D")
    grams = FusedGrams(train, kernels)
    n = train.n
    g = train.g
    g0, g1 = grams.g0, grams.g1
    K_gx = grams.K_gg * grams.K_xx
    K_gxm = K_gx * grams.K_mm
    K_xm = grams.K_xx * grams.K_mm
    D = train.d
    G = g.astype(float)

    lam = dict(penalties or {})
    # one spectrum per distinct Gram serves both tuning and the final solve
    spectra = {}

    def spectrum(key):
        if key not in spectra:
            K, groups = {"gxm": (K_gxm, g), "gx": (K_gx, g), "x": (grams.K_xx, None),
                         "xm": (K_xm, None)}[key]
            spectra[key] = Spectrum(K, groups)
        return spectra[key]

    regressions = {"lambda": ("gxm", train.y), "lambda3": ("gx", D), "lambda4": ("gxm", D),
                   "lambda5": ("x", G), "lambda6": ("xm", G)}
    for name in PENALTY_NAMES:
        if lam.get(name) is not None:
            continue
        if name == "lambda1":
            lam[name] = tune_lambda(grams.first_stage_gram, grid=grid,
                                    groups=grams.first_stage_groups(), target_gram=grams.K_mm)
        else:
            key, target = regressions[name]
            lam[name] = tune_lambda(None, target, grid, spectrum=spectrum(key))

    def fit(name):
        key, target = regressions[name]
        return spectrum(key).solve(target, lam[name])

    w = fit("lambda") * g1
    model = EmbeddingModel(train, kernels, lam["lambda1"], grams=grams)
    a3 = fit("lambda3") * g0
    a4 = fit("lambda4") * g0
    a5 = fit("lambda5")
    a6 = fit("lambda6")
    X, M = train.x, train.m

    def nu(x):
        return model.partial_means(w, x, d)

    def gamma(x, m):
        return (_cross(kernels.x, X, x) * _cross(kernels.m, M, m)).T @ w

    def treat_prob(p1):
        return censor(p1 if d == 1 else 1.0 - p1, epsilon)

    def pi(x):
        return treat_prob(_cross(kernels.x, X, x).T @ a3)

    def rho(x, m):
        return treat_prob((_cross(kernels.x, X, x) * _cross(kernels.m, M, m)).T @ a4)

    def pi_prime(x):
        return censor(_cross(kernels.x, X, x).T @ a5, epsilon)

    def rho_prime(x, m):
        return censor((_cross(kernels.x, X, x) * _cross(kernels.m, M, m)).T @ a6, epsilon)

    return NuisanceSet(nu, gamma, pi, rho, pi_prime, rho_prime, float(d), float(epsilon),
                       {k: float(v) for k, v in lam.items()})


@dataclass(frozen=True, eq=False)
class EffectEstimate:
    theta: float
    sigma: float
    ci_lower: float
    ci_upper: float
    level: float
    psi: np.ndarray
    folds: int
    d: float
    epsilon: float
    penalties: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.psi.shape[0]

    def covers(self, value: float) -> bool:
        return self.ci_lower <= value <= self.ci_upper

    def to_dict(self) -> dict:
        return {"theta": self.theta, "sigma": self.sigma, "ciLower": self.ci_lower,
                "ciUpper": self.ci_upper, "level": self.level, "n": self.n,
                "folds": self.folds, "d": self.d, "epsilon": self.epsilon,
                "penalties": self.penalties}

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text


def summarize(psi, level=0.95, folds=1, d=1.0, epsilon=DEFAULT_EPSILON, penalties=None
              ) -> EffectEstimate:
    """Point estimate, standard deviation and Gaussian interval from moments."""
    if not 0 < level < 1:
        raise ValidationError(f"confidence level must be in (0, 1), got {level}")
    psi = np.asarray(psi, dtype=float)
    n = psi.shape[0]
    theta = float(np.mean(psi))
    sigma = float(np.sqrt(np.mean((psi - theta) ** 2)))
    if sigma == 0.0:
        log.warning("moment values are constant; confidence interval has zero width")
    half = float(norm.ppf(1 - (1 - level) / 2)) * sigma / np.sqrt(n)
    return EffectEstimate(theta, sigma, theta - half, theta + half, float(level), psi,
                          int(folds), float(d), float(epsilon), list(penalties or []))


def dml_estimate(dataset, d=1, folds: int = DEFAULT_FOLDS, level: float = 0.95,
                 epsilon: float = DEFAULT_EPSILON, seed=0, fitter: Callable | None = None,
                 partition=None, grid=None) -> EffectEstimate:
    """Cross-fitted estimate and confidence interval for the long-term mean under ``d``.

    ``fitter(train, d)`` returns a :class:`NuisanceSet`; the default fits the
    kernel nuisances, tuning kernels and penalties on each fold complement.
    """
    if dataset.treatment != BINARY:
        raise ValidationError("the debiased estimator needs a binary treatment")
    if d not in (0, 1):
        raise ValidationError(f"treatment value must be 0 or 1, got {d}")
    if fitter is None:
        def fitter(train, dd):
            return fit_nuisances(train, dd, epsilon=epsilon, grid=grid)
    if partition is None:
        partition = split_folds(dataset.n, folds, seed, groups=dataset.g)
    psi = np.empty(dataset.n)
    penalties = []
    for f in range(partition.L):
        train = dataset.subset(partition.complement(f))
        nuis = fitter(train, d)
        held = partition.indices(f)
        psi[held] = moment_values(Rows.take(dataset, held), nuis)
        penalties.append(dict(nuis.penalties))
    return summarize(psi, level, partition.L, d, epsilon, penalties)
