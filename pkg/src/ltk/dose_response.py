"""Closed-form kernel estimators of long-term dose-response curves.

For a treatment value d the estimate is an average over an index set S of

    w^T (K_G1 * chi(x_i, d)),   w = (K_GG * K_XX * K_MM + n lam I)^{-1} Y'

with S the whole sample (ATE), alternative-population covariates (DS), the
experimental rows (EXP) or the observational rows (OBS). Averaging chi first
collapses every grid point to one inner product with a precomputed vector.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass

import numpy as np

from .data import AltPopulation
from .embeddings import EmbeddingModel, FusedGrams
from .errors import ValidationError
from .kernels import KernelSet
from .ridge import RidgeSystem
from .tuning import tune

DEFAULT_GRID_SIZE = 25


class Estimand(str, enum.Enum):
    ATE = "ate"
    DS = "ds"
    EXP = "exp"
    OBS = "obs"

    @classmethod
    def parse(cls, value) -> "Estimand":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValidationError(
                f"unknown estimand {value!r}; choose from {[e.value for e in cls]}") from None


@dataclass(frozen=True, eq=False)
class AveragingSet:
    """Where chi is averaged: external points or an index into the dataset."""

    x_points: np.ndarray | None
    index: np.ndarray | None
    size: int


def averaging_set(dataset, estimand, alt: AltPopulation | None = None) -> AveragingSet:
    estimand = Estimand.parse(estimand)
    if estimand is Estimand.DS:
        if alt is None:
            raise ValidationError("the DS estimand needs an alternative population")
        alt.check_against(dataset)
        return AveragingSet(alt.x, None, alt.n)
    if estimand is Estimand.ATE:
        return AveragingSet(None, None, dataset.n)
    idx = np.flatnonzero(dataset.g == (0 if estimand is Estimand.EXP else 1))
    if idx.size == 0:
        raise ValidationError(f"empty averaging set for estimand {estimand.value}")
    return AveragingSet(None, idx, idx.size)


def mean_chi_operator(model: EmbeddingModel, dataset, estimand, alt=None) -> np.ndarray:
    s = averaging_set(dataset, estimand, alt)
    return model.averaging_operator(s.x_points, s.index)


def default_grid(dataset, size: int = DEFAULT_GRID_SIZE) -> np.ndarray:
    """Equispaced quantiles (5%..95%) of the treatment on experimental rows."""
    d = dataset.d[dataset.g == 0]
    return np.quantile(d, np.linspace(0.05, 0.95, size))


def parse_grid(text: str) -> np.ndarray:
    """``start:stop:count`` -> ``count`` equispaced points, endpoints included."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ValidationError(f"grid must look like start:stop:count, got {text!r}")
    try:
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise ValidationError(f"malformed grid {text!r}") from None
    if count < 1:
        raise ValidationError("grid count must be at least 1")
    return np.linspace(start, stop, count)


@dataclass(frozen=True, eq=False)
class DoseResponseCurve:
    grid: np.ndarray
    estimates: np.ndarray
    estimand: Estimand
    lam: float
    lam1: float
    n: int
    n_exp: int
    n_obs: int

    def to_dict(self) -> dict:
        return {
            "curve": [{"d": float(d), "estimate": float(v)}
                      for d, v in zip(self.grid, self.estimates)],
            "metadata": {"estimand": self.estimand.value, "lambda": self.lam,
                         "lambda1": self.lam1, "n": self.n, "nExp": self.n_exp,
                         "nObs": self.n_obs},
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_dict(cls, obj: dict) -> "DoseResponseCurve":
        meta = obj["metadata"]
        return cls(np.array([p["d"] for p in obj["curve"]]),
                   np.array([p["estimate"] for p in obj["curve"]]),
                   Estimand.parse(meta["estimand"]), meta["lambda"], meta["lambda1"],
                   meta["n"], meta["nExp"], meta["nObs"])


def outcome_weights(grams: FusedGrams, lam: float, y=None) -> np.ndarray:
    """(K_GG * K_XX * K_MM + n lam I)^{-1} Y'; ``y`` defaults to the Gram dataset's outcome."""
    y = grams.dataset.y if y is None else np.asarray(y, dtype=float)
    return RidgeSystem(grams.outcome_gram, lam, groups=grams.dataset.g).solve(y)


def estimate_curve(dataset, estimand, grid, kernels: KernelSet, lam: float, lam1: float,
                   alt: AltPopulation | None = None, model: EmbeddingModel | None = None
                   ) -> DoseResponseCurve:
    """Dose-response estimates of ``estimand`` at every treatment value in ``grid``.

    Parameters
    ----------
    dataset : FusedDataset
    estimand : Estimand or str
    grid : array_like
        Treatment values.
    kernels : KernelSet
    lam, lam1 : float
        Outcome-regression and surrogate-embedding ridge penalties.
    alt : AltPopulation, optional
        Required for ``DS``.
    model : EmbeddingModel, optional
        Prebuilt first stage for the same covariates, treatments, surrogates,
        kernels and ``lam1``; the outcome is always taken from ``dataset``.
    """
    estimand = Estimand.parse(estimand)
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise ValidationError("treatment grid is empty")
    if model is None:
        model = EmbeddingModel(dataset, kernels, lam1)
    op = mean_chi_operator(model, dataset, estimand, alt)
    if model.grams.dataset.n != dataset.n:
        raise ValidationError("prebuilt model was fitted on a different number of rows")
    w = outcome_weights(model.grams, lam, dataset.y)
    # theta(d) = (g1 * w)^T P (g0 * k_d) = z^T (g0 * k_d)
    z = op.T @ (model.g1 * w)
    est = np.array([np.dot(z, model.g0 * model.k_d(d)) for d in grid])
    return DoseResponseCurve(grid, est, estimand, float(lam), float(lam1),
                             dataset.n, dataset.n_exp, dataset.n_obs)


def estimate_curve_tuned(dataset, estimand, grid=None, alt: AltPopulation | None = None,
                         kernels: KernelSet | None = None, lam_grid=None) -> DoseResponseCurve:
    """Median-heuristic kernels and LOOCV penalties, then :func:`estimate_curve`.

    Fully deterministic: no randomness enters tuning for n <= 5000.
    """
    if grid is None:
        grid = default_grid(dataset)
    hp, grams = tune(dataset, kernels, which=("lam", "lam1"), grid=lam_grid)
    model = EmbeddingModel(dataset, hp.kernels, hp.lam1, grams=grams)
    return estimate_curve(dataset, estimand, grid, hp.kernels, hp.lam, hp.lam1, alt, model)
