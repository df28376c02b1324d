"""Counterfactual outcome distributions: kernel mean embeddings and herding."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from . import _accel
from .data import AltPopulation
from .dose_response import Estimand, mean_chi_operator
from .embeddings import EmbeddingModel
from .errors import ValidationError
from .kernels import GAUSSIAN, KernelSet, KernelSpec, gram
from .ridge import RidgeSystem
from .tuning import tune

GRID_POINTS = 512
GRID_MARGIN = 0.10


@dataclass(frozen=True, eq=False)
class DistributionEmbedding:
    """Estimated embedding y -> sum_i c_i k_Y(Y'_i, y) of a counterfactual law."""

    coefficients: np.ndarray
    support: np.ndarray
    outcome_kernel: KernelSpec
    d: float
    estimand: Estimand
    lam1: float | None = None
    lam2: float | None = None

    def __call__(self, y) -> np.ndarray:
        y = np.atleast_1d(np.asarray(y, dtype=float))
        return gram(self.outcome_kernel, y, self.support) @ self.coefficients

    def mean(self) -> float:
        """Plug-in E[Y] from the embedding weights: sum_i c_i Y'_i / sum_i c_i."""
        return float(self.coefficients @ self.support / self.coefficients.sum())

    def to_dict(self) -> dict:
        return {"coefficients": self.coefficients.tolist(),
                "outcomeLengthscale": self.outcome_kernel.lengthscales[0],
                "d": self.d, "estimand": self.estimand.value,
                "support": self.support.tolist(),
                "lambda1": self.lam1, "lambda2": self.lam2}

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict())
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_dict(cls, obj: dict) -> "DistributionEmbedding":
        return cls(np.asarray(obj["coefficients"], dtype=float),
                   np.asarray(obj["support"], dtype=float),
                   KernelSpec.gaussian([obj["outcomeLengthscale"]]), float(obj["d"]),
                   Estimand.parse(obj["estimand"]), obj.get("lambda1"), obj.get("lambda2"))

    @classmethod
    def from_json(cls, path) -> "DistributionEmbedding":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def embed_distribution(dataset, estimand, d, kernels: KernelSet, lam1: float, lam2: float,
                       alt: AltPopulation | None = None, model: EmbeddingModel | None = None
                       ) -> DistributionEmbedding:
    """Embedding of the counterfactual outcome law under treatment ``d``.

    ``c = (K_GG * K_XX * K_MM + n lam2 I)^{-1} mean_i (K_G1 * chi_i(d))``. The
    coefficients do not involve the outcome kernel; it only enters evaluation.
    """
    estimand = Estimand.parse(estimand)
    if kernels.y is None or kernels.y.family != GAUSSIAN or kernels.y.dim != 1:
        raise ValidationError("distribution embeddings need a 1-D Gaussian outcome kernel")
    if model is None:
        model = EmbeddingModel(dataset, kernels, lam1)
    op = mean_chi_operator(model, dataset, estimand, alt)
    target = model.g1 * (op @ (model.g0 * model.k_d(d)))
    coef = RidgeSystem(model.grams.outcome_gram, lam2, groups=dataset.g).solve(target)
    return DistributionEmbedding(coef, np.array(dataset.y), kernels.y, float(d), estimand,
                                 float(lam1), float(lam2))


def embed_distribution_tuned(dataset, estimand, d, alt=None, kernels=None, lam_grid=None
                             ) -> DistributionEmbedding:
    hp, grams = tune(dataset, kernels, which=("lam1", "lam2"), grid=lam_grid)
    model = EmbeddingModel(dataset, hp.kernels, hp.lam1, grams=grams)
    return embed_distribution(dataset, estimand, d, hp.kernels, hp.lam1, hp.lam2, alt, model)


def default_candidate_grid(dataset, size: int = GRID_POINTS, margin: float = GRID_MARGIN
                           ) -> np.ndarray:
    """Equispaced grid over the observational outcome range, widened by ``margin``."""
    return candidate_grid(dataset.y[dataset.g == 1], size, margin)


def embedding_candidate_grid(embedding: DistributionEmbedding, size: int = GRID_POINTS,
                             margin: float = GRID_MARGIN) -> np.ndarray:
    """Default grid rebuilt from a stored embedding.

    Experimental rows carry zero coefficients, so the observational outcomes
    are the support points with nonzero weight.
    """
    y = embedding.support[embedding.coefficients != 0]
    return candidate_grid(y if y.size else embedding.support, size, margin)


def candidate_grid(y, size: int = GRID_POINTS, margin: float = GRID_MARGIN) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise ValidationError("no outcome values to span a candidate grid")
    lo, hi = float(y.min()), float(y.max())
    pad = margin * (hi - lo) if hi > lo else max(abs(lo), 1.0) * margin
    return np.linspace(lo - pad, hi + pad, size)


@dataclass(frozen=True, eq=False)
class HerdedSample:
    values: np.ndarray
    grid: np.ndarray

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["y_tilde"])
            for v in self.values:
                w.writerow([repr(float(v))])


def herd(embedding: DistributionEmbedding, m: int, grid) -> HerdedSample:
    """Greedy herding: ``m`` points from ``grid`` matching the embedding.

    Step j maximises ``embedding(y) - 1/(j+1) * sum_{l<j} k_Y(Y_l, y)``; ties
    go to the smallest grid value.
    """
    grid = np.unique(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise ValidationError("herding candidate grid is empty")
    if m < 1:
        raise ValidationError("need at least one herded sample")
    target = np.ascontiguousarray(embedding(grid))
    inv_ls = 1.0 / embedding.outcome_kernel.lengthscales[0]
    idx = _accel.herd_indices(target, grid, inv_ls, int(m))
    return HerdedSample(grid[idx], grid)


def ks_distance(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov statistic."""
    from scipy.stats import ks_2samp
    return float(ks_2samp(a, b).statistic)
