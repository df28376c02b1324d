"""Kernel functions, median-heuristic lengthscales and Gram matrices.

Two families are supported: a product of scalar Gaussian kernels (one
lengthscale per input dimension) and the indicator ("Dirac") kernel for
discrete variables. The selection indicator G always uses the indicator
kernel, so ``K_GG`` is a same-group mask and ``K_G0``/``K_G1`` are 0/1 masks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _accel
from .errors import DegenerateLengthscaleError, ValidationError

GAUSSIAN = "gaussian"
DIRAC = "dirac"

MEDIAN_MAX_POINTS = 5000


def as_points(w) -> np.ndarray:
    """Coerce scalars, vectors or (n, p) arrays to a float (n, p) array.

    A 1-D input is read as n scalar points, not as one p-dimensional point.
    """
    arr = np.asarray(w, dtype=float)
    if arr.ndim == 0:
        return arr.reshape(1, 1)
    if arr.ndim == 1:
        return arr[:, None]
    if arr.ndim != 2:
        raise ValidationError(f"points must be at most 2-D, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus its per-dimension lengthscales.

    ``lengthscales`` is ``None`` for the indicator kernel.
    """

    family: str
    lengthscales: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.family == GAUSSIAN:
            if not self.lengthscales:
                raise ValidationError("Gaussian kernel needs at least one lengthscale")
            ls = tuple(float(s) for s in self.lengthscales)
            if not all(np.isfinite(s) and s > 0 for s in ls):
                raise ValidationError(f"lengthscales must be positive and finite, got {ls}")
            object.__setattr__(self, "lengthscales", ls)
        elif self.family == DIRAC:
            if self.lengthscales is not None:
                raise ValidationError("indicator kernel takes no lengthscales")
        else:
            raise ValidationError(f"unknown kernel family {self.family!r}")

    @classmethod
    def gaussian(cls, lengthscales) -> "KernelSpec":
        return cls(GAUSSIAN, tuple(np.atleast_1d(np.asarray(lengthscales, dtype=float))))

    @classmethod
    def dirac(cls) -> "KernelSpec":
        return cls(DIRAC)

    @property
    def dim(self) -> int | None:
        return None if self.lengthscales is None else len(self.lengthscales)

    def __call__(self, w, w2) -> float:
        return eval_kernel(self, w, w2)

    def gram(self, rows, cols=None) -> np.ndarray:
        return gram(self, rows, cols)

    def scaled(self, factor: float) -> "KernelSpec":
        if self.family == DIRAC:
            return self
        return KernelSpec(GAUSSIAN, tuple(s * factor for s in self.lengthscales))

    def to_dict(self) -> dict:
        return {"family": self.family,
                "lengthscales": None if self.lengthscales is None else list(self.lengthscales)}

    @classmethod
    def from_dict(cls, obj: dict) -> "KernelSpec":
        ls = obj.get("lengthscales")
        return cls(obj["family"], None if ls is None else tuple(ls))


def _check_dim(spec: KernelSpec, *arrays):
    if spec.family != GAUSSIAN:
        if len({a.shape[1] for a in arrays}) > 1:
            raise ValidationError("indicator kernel inputs have different dimensions")
        return
    for a in arrays:
        if a.shape[1] != len(spec.lengthscales):
            raise ValidationError(
                f"point dimension {a.shape[1]} does not match "
                f"{len(spec.lengthscales)} lengthscales")


def eval_kernel(spec: KernelSpec, w, w2) -> float:
    """Kernel value k(w, w2) for two single points."""
    a = np.atleast_1d(np.asarray(w, dtype=float))
    b = np.atleast_1d(np.asarray(w2, dtype=float))
    if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape:
        raise ValidationError(f"incompatible points {a.shape} and {b.shape}")
    _check_dim(spec, a[None, :], b[None, :])
    if spec.family == DIRAC:
        return float(np.array_equal(a, b))
    z = (a - b) / np.asarray(spec.lengthscales)
    return float(np.exp(-0.5 * np.dot(z, z)))


def gram(spec: KernelSpec, rows, cols=None) -> np.ndarray:
    """Kernel matrix with entries k(rows[i], cols[j]).

    With ``cols`` omitted the matrix is over ``rows`` against itself and is
    returned exactly symmetric with a unit diagonal.
    """
    A = np.ascontiguousarray(as_points(rows))
    square = cols is None
    B = A if square else np.ascontiguousarray(as_points(cols))
    _check_dim(spec, A, B)
    if spec.family == DIRAC:
        K = _accel.dirac_gram(A, B)
    else:
        inv_ls = 1.0 / np.asarray(spec.lengthscales, dtype=float)
        K = _accel.gaussian_gram(A, B, inv_ls)
    if square:
        K = 0.5 * (K + K.T)
        np.fill_diagonal(K, 1.0)
    return K


def median_heuristic(points, max_points: int = MEDIAN_MAX_POINTS, seed: int = 0) -> np.ndarray:
    """Per-dimension median of pairwise absolute differences.

    Uses the lower median over all i < k pairs. Above ``max_points`` points a
    uniform subsample of that size (fixed ``seed``) is used instead.

    Raises
    ------
    DegenerateLengthscaleError
        If some dimension has median interpoint distance zero.
    """
    W = as_points(points)
    if W.shape[0] < 2:
        raise ValidationError("median heuristic needs at least two points")
    if W.shape[0] > max_points:
        rng = np.random.default_rng(seed)
        W = W[np.sort(rng.choice(W.shape[0], size=max_points, replace=False))]
    out = np.empty(W.shape[1])
    for j in range(W.shape[1]):
        diffs = _accel.abs_pair_diffs(np.ascontiguousarray(W[:, j]))
        k = (diffs.size - 1) // 2
        out[j] = np.partition(diffs, k)[k]
        if not out[j] > 0:
            raise DegenerateLengthscaleError(
                f"dimension {j} has zero median interpoint distance; "
                "override its lengthscale or drop it")
    return out


def gaussian_from_median(points, **kw) -> KernelSpec:
    return KernelSpec.gaussian(median_heuristic(points, **kw))


@dataclass(frozen=True)
class KernelSet:
    """Kernels for covariates, treatment, surrogates and (optionally) outcome.

    The selection indicator always uses the indicator kernel and is not stored.
    """

    x: KernelSpec
    d: KernelSpec
    m: KernelSpec
    y: KernelSpec | None = None

    def to_dict(self) -> dict:
        out = {"x": self.x.to_dict(), "d": self.d.to_dict(), "m": self.m.to_dict()}
        if self.y is not None:
            out["y"] = self.y.to_dict()
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "KernelSet":
        y = obj.get("y")
        return cls(KernelSpec.from_dict(obj["x"]), KernelSpec.from_dict(obj["d"]),
                   KernelSpec.from_dict(obj["m"]), None if y is None else KernelSpec.from_dict(y))


def fit_kernels(dataset, dirac_treatment: bool | None = None, with_outcome: bool = True) -> KernelSet:
    """Median-heuristic kernels for every variable block of a fused dataset.

    Covariate and surrogate lengthscales use all rows; the treatment uses
    experimental rows only and the outcome observational rows only, since the
    other group stores fill values there. Binary treatments get the indicator
    kernel unless ``dirac_treatment`` says otherwise.
    """
    if dirac_treatment is None:
        dirac_treatment = dataset.is_binary
    exp = dataset.g == 0
    obs = ~exp
    kx = gaussian_from_median(dataset.x)
    kd = KernelSpec.dirac() if dirac_treatment else gaussian_from_median(dataset.d[exp])
    km = gaussian_from_median(dataset.m)
    ky = gaussian_from_median(dataset.y[obs]) if with_outcome else None
    return KernelSet(kx, kd, km, ky)
