"""Hyperparameter selection: median-heuristic kernels and LOOCV penalties.

Each ridge penalty is tuned on its own regression, on the stacked fused
system exactly as it appears in the estimator:

* ``lam``  -- outcome regression of Y' on (G, X, M);
* ``lam1`` -- surrogate embedding, phi(M) on (G, X, D');
* ``lam2`` -- outcome embedding, phi(Y') on (G, X, M).

The two embedding regressions have RKHS-valued responses, scored by the
squared RKHS norm of the held-out residual.
"""

from __future__ import annotations

from dataclasses import dataclass

from .embeddings import FusedGrams
from .kernels import KernelSet, fit_kernels
from .ridge import tune_lambda


@dataclass(frozen=True)
class Hyperparameters:
    kernels: KernelSet
    lam: float | None = None
    lam1: float | None = None
    lam2: float | None = None

    def to_dict(self) -> dict:
        return {"kernels": self.kernels.to_dict(), "lambda": self.lam,
                "lambda1": self.lam1, "lambda2": self.lam2}

    @classmethod
    def from_dict(cls, obj: dict) -> "Hyperparameters":
        return cls(KernelSet.from_dict(obj["kernels"]), obj.get("lambda"),
                   obj.get("lambda1"), obj.get("lambda2"))


def tune_outcome_penalty(grams: FusedGrams, grid=None) -> float:
    return tune_lambda(grams.outcome_gram, grams.dataset.y, grid, groups=grams.dataset.g)


def tune_embedding_penalty(grams: FusedGrams, grid=None) -> float:
    return tune_lambda(grams.first_stage_gram, grid=grid, groups=grams.first_stage_groups(),
                       target_gram=grams.K_mm)


def tune_distribution_penalty(grams: FusedGrams, grid=None) -> float:
    return tune_lambda(grams.outcome_gram, grid=grid, groups=grams.dataset.g,
                       target_gram=grams.K_yy)


def tune(dataset, kernels: KernelSet | None = None, which=("lam", "lam1"), grid=None,
         grams: FusedGrams | None = None) -> tuple[Hyperparameters, FusedGrams]:
    """Tune the requested penalties; returns them with the Gram cache used."""
    if grams is None:
        if kernels is None:
            kernels = fit_kernels(dataset, with_outcome="lam2" in which)
        grams = FusedGrams(dataset, kernels)
    kernels = grams.kernels
    fns = {"lam": tune_outcome_penalty, "lam1": tune_embedding_penalty,
           "lam2": tune_distribution_penalty}
    vals = {k: fns[k](grams, grid) for k in which}
    return Hyperparameters(kernels, **vals), grams
