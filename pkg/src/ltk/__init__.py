"""Kernel estimators for long-term causal effects from fused data.

Experimental rows (G = 0) observe covariates, treatment and short-term
surrogates; observational rows (G = 1) observe covariates, surrogates and the
long-term outcome. The package estimates dose responses, debiased treatment
effects with confidence intervals, and counterfactual outcome distributions.
"""

from ._accel import BACKEND
from .data import AltPopulation, FoldPartition, FusedDataset, load_alt_csv, load_fused_csv, split_folds
from .distributions import DistributionEmbedding, HerdedSample, embed_distribution, herd
from .dose_response import DoseResponseCurve, Estimand, estimate_curve, estimate_curve_tuned
from .embeddings import EmbeddingModel, FusedGrams
from .errors import NumericalError, ValidationError
from .kernels import KernelSet, KernelSpec, eval_kernel, gram, median_heuristic
from .ridge import loocv_score, solve_ridge, tune_lambda
from .semiparametric import EffectEstimate, NuisanceSet, dml_estimate, fit_nuisances, moment_values
from .synthetic import LinearGaussianDGP, SineSurrogateDGP, generate, true_dose_response

__version__ = "0.1.0"
