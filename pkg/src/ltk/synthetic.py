"""Synthetic fused data with known long-term causal effects.

Structural model (all noise Gaussian and independent)::

    X ~ N(x_mean, diag(x_sd^2))
    G | X ~ Bernoulli(clip(logistic(s0 + s'X), 0.05, 0.95))
    D | X ~ N(a0 + a'X, treat_sd^2)            (continuous)
          ~ Bernoulli(clip(logistic(a0 + a'X)))  (binary)
    M | X, D ~ N(mu_M(X, D), m_sd^2 I)
    Y | X, M ~ N(c0 + c_M'M + c_X'X, y_sd^2)

D is drawn for every row with the same mechanism in both groups and then
hidden on G = 1; Y is hidden on G = 0. M and Y ignore G, so selection is
unconfounded and the surrogate carries the whole effect of D on Y.

For ``LinearGaussianDGP`` ``mu_M(x, d) = b0 + b_D d + B_X x``. For
``SineSurrogateDGP`` ``mu_M(x, d) = b0 + sin(b_D d + B_X x)`` elementwise.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit

from .data import BINARY, CONTINUOUS, AltPopulation, FusedDataset
from .errors import ValidationError
from .semiparametric import DEFAULT_EPSILON, NuisanceSet, censor

PROB_BOUNDS = (0.05, 0.95)
MAX_ATTEMPTS = 100


def _vec(v, size, name):
    arr = np.asarray(v, dtype=float).reshape(-1)
    if arr.size != size:
        raise ValidationError(f"{name} must have length {size}, got {arr.size}")
    return arr


@dataclass(frozen=True)
class LinearGaussianDGP:
    p: int = 2
    q: int = 2
    x_mean: tuple = (0.0, 0.0)
    x_sd: tuple = (1.0, 1.0)
    select_intercept: float = 0.0
    select_weights: tuple = (0.5, -0.5)
    treatment: str = CONTINUOUS
    treat_intercept: float = 0.5
    treat_weights: tuple = (0.3, 0.0)
    treat_sd: float = 0.5
    m_intercept: tuple = (0.0, 0.0)
    m_treat: tuple = (1.0, 0.5)
    m_x: tuple = ((0.5, 0.0), (0.0, 0.5))
    m_sd: float = 0.5
    y_intercept: float = 0.0
    y_m: tuple = (0.8, 0.4)
    y_x: tuple = (0.5, -0.25)
    y_sd: float = 0.5
    kind: str = field(default="linear", init=False)

    def __post_init__(self):
        if self.treatment not in (CONTINUOUS, BINARY):
            raise ValidationError(f"unknown treatment kind {self.treatment!r}")
        p, q = self.p, self.q
        for name, size in (("x_mean", p), ("x_sd", p), ("select_weights", p),
                           ("treat_weights", p), ("m_intercept", q), ("m_treat", q),
                           ("y_m", q), ("y_x", p)):
            object.__setattr__(self, name, tuple(_vec(getattr(self, name), size, name)))
        bx = np.asarray(self.m_x, dtype=float)
        if bx.shape != (q, p):
            raise ValidationError(f"m_x must have shape ({q}, {p}), got {bx.shape}")
        object.__setattr__(self, "m_x", tuple(map(tuple, bx)))
        if min(self.x_sd) <= 0 or min(self.m_sd, self.y_sd) < 0 or self.treat_sd < 0:
            raise ValidationError("standard deviations must be non-negative (x_sd positive)")

    # -- arrays ------------------------------------------------------------

    @property
    def B_x(self) -> np.ndarray:
        return np.asarray(self.m_x)

    def _a(self, name):
        return np.asarray(getattr(self, name))

    # -- mechanisms --------------------------------------------------------

    def selection_prob(self, x) -> np.ndarray:
        """P(G = 1 | x)."""
        z = self.select_intercept + np.atleast_2d(x) @ self._a("select_weights")
        return np.clip(expit(z), *PROB_BOUNDS)

    def treatment_prob(self, x) -> np.ndarray:
        """P(D = 1 | x) for the binary configuration."""
        z = self.treat_intercept + np.atleast_2d(x) @ self._a("treat_weights")
        return np.clip(expit(z), *PROB_BOUNDS)

    def surrogate_mean(self, x, d) -> np.ndarray:
        """(k, q) conditional means of M given x (k, p) and d (scalar or (k,))."""
        x = np.atleast_2d(x)
        d = np.broadcast_to(np.asarray(d, dtype=float), (x.shape[0],))
        return self._a("m_intercept") + d[:, None] * self._a("m_treat") + x @ self.B_x.T

    def outcome_mean(self, x, m) -> np.ndarray:
        """gamma_0(G=1, x, m) = E[Y | x, m]."""
        return (self.y_intercept + np.atleast_2d(m) @ self._a("y_m")
                + np.atleast_2d(x) @ self._a("y_x"))

    def expected_surrogate(self, d, x_mean=None) -> np.ndarray:
        """E[mu_M(X, d)] with X ~ N(x_mean, diag(x_sd^2))."""
        mu = self._a("x_mean") if x_mean is None else _vec(x_mean, self.p, "x_mean")
        return self.surrogate_mean(mu[None, :], d)[0]

    # -- sampling ----------------------------------------------------------

    def _draw_x(self, rng, n, x_mean=None):
        mu = self._a("x_mean") if x_mean is None else _vec(x_mean, self.p, "x_mean")
        return mu + rng.standard_normal((n, self.p)) * self._a("x_sd")

    def _draw_d(self, rng, x):
        if self.treatment == BINARY:
            return (rng.random(x.shape[0]) < self.treatment_prob(x)).astype(float)
        z = self.treat_intercept + x @ self._a("treat_weights")
        return z + self.treat_sd * rng.standard_normal(x.shape[0])

    def _draw_m(self, rng, x, d):
        return self.surrogate_mean(x, d) + self.m_sd * rng.standard_normal((x.shape[0], self.q))

    def _draw_y(self, rng, x, m):
        return self.outcome_mean(x, m) + self.y_sd * rng.standard_normal(x.shape[0])

    def to_dict(self) -> dict:
        out = asdict(self)
        out["m_x"] = [list(r) for r in self.m_x]
        return out


@dataclass(frozen=True)
class SineSurrogateDGP(LinearGaussianDGP):
    kind: str = field(default="sine", init=False)

    def surrogate_mean(self, x, d) -> np.ndarray:
        x = np.atleast_2d(x)
        d = np.broadcast_to(np.asarray(d, dtype=float), (x.shape[0],))
        return self._a("m_intercept") + np.sin(d[:, None] * self._a("m_treat") + x @ self.B_x.T)

    def expected_surrogate(self, d, x_mean=None) -> np.ndarray:
        # E sin(a + b'X) = sin(a + b'mu) exp(-b' Sigma b / 2) for Gaussian X
        mu = self._a("x_mean") if x_mean is None else _vec(x_mean, self.p, "x_mean")
        var = (self.B_x ** 2) @ (self._a("x_sd") ** 2)
        index = float(d) * self._a("m_treat") + self.B_x @ mu
        return self._a("m_intercept") + np.sin(index) * np.exp(-0.5 * var)


DGP_KINDS = {"linear": LinearGaussianDGP, "sine": SineSurrogateDGP}


def dgp_from_dict(obj: dict) -> LinearGaussianDGP:
    obj = dict(obj)
    kind = obj.pop("kind", "linear")
    if kind not in DGP_KINDS:
        raise ValidationError(f"unknown DGP kind {kind!r}")
    return DGP_KINDS[kind](**obj)


def load_dgp(path) -> LinearGaussianDGP:
    with open(path, encoding="utf-8") as fh:
        return dgp_from_dict(json.load(fh))


def save_dgp(dgp: LinearGaussianDGP, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(dgp.to_dict(), fh, indent=2)
        fh.write("\n")


def generate(dgp: LinearGaussianDGP, n: int, seed=None) -> FusedDataset:
    """Draw a fused dataset of ``n`` rows; deterministic given ``seed``.

    Draws in which one group is empty are discarded and redrawn from the same
    generator, up to 100 times.
    """
    if n < 4:
        raise ValidationError("need n >= 4")
    rng = np.random.default_rng(seed)
    for _ in range(MAX_ATTEMPTS):
        x = dgp._draw_x(rng, n)
        g = (rng.random(n) < dgp.selection_prob(x)).astype(np.int64)
        d = dgp._draw_d(rng, x)
        m = dgp._draw_m(rng, x, d)
        y = dgp._draw_y(rng, x, m)
        if 0 < g.sum() < n:
            return FusedDataset.from_arrays(g, x, np.where(g == 0, d, 0.0), m,
                                            np.where(g == 1, y, 0.0), dgp.treatment)
    raise ValidationError(f"selection produced a single group in {MAX_ATTEMPTS} draws")


def sample_alt_population(dgp: LinearGaussianDGP, n: int, shift=0.5, seed=None) -> AltPopulation:
    """Covariates from the same Gaussian with mean shifted by ``shift``."""
    rng = np.random.default_rng(seed)
    mu = np.asarray(dgp.x_mean) + np.broadcast_to(np.asarray(shift, dtype=float), (dgp.p,))
    return AltPopulation(dgp._draw_x(rng, n, mu))


def true_dose_response(dgp: LinearGaussianDGP, d, x_mean=None) -> float:
    """theta_0(d) = c0 + c_M' E[mu_M(X, d)] + c_X' E[X] under covariate mean ``x_mean``."""
    mu = np.asarray(dgp.x_mean) if x_mean is None else _vec(x_mean, dgp.p, "x_mean")
    return float(dgp.y_intercept + np.dot(dgp.y_m, dgp.expected_surrogate(d, mu))
                 + np.dot(dgp.y_x, mu))


def true_ate(dgp: LinearGaussianDGP) -> float:
    return true_dose_response(dgp, 1.0) - true_dose_response(dgp, 0.0)


def sample_counterfactual(dgp: LinearGaussianDGP, d, size: int, seed=None, x_mean=None
                          ) -> np.ndarray:
    """Draws of Y^(d) over the (possibly shifted) covariate population."""
    rng = np.random.default_rng(seed)
    x = dgp._draw_x(rng, size, x_mean)
    m = dgp._draw_m(rng, x, np.full(size, float(d)))
    return dgp._draw_y(rng, x, m)


def _surrogate_loglik(dgp, x, m, d):
    r = m - dgp.surrogate_mean(x, d)
    return -0.5 * np.sum(r * r, axis=1) / dgp.m_sd ** 2


def oracle_nuisances(dgp: LinearGaussianDGP, d, epsilon: float = DEFAULT_EPSILON) -> NuisanceSet:
    """True nuisance functions of the binary-treatment DGP, censored like fitted ones.

    ``nu_0(x) = c0 + c_M' mu_M(x, d) + c_X' x``; ``delta_0 = gamma_0``;
    treatment propensities come from the logistic mechanism and Bayes' rule over
    the two Gaussian surrogate laws; P(G = 1 | x, m) = P(G = 1 | x) because M is
    independent of G given X.
    """
    if dgp.treatment != BINARY:
        raise ValidationError("oracle nuisances are defined for the binary configuration")
    if d not in (0, 1):
        raise ValidationError(f"treatment value must be 0 or 1, got {d}")
    d = float(d)

    def nu(x):
        return dgp.outcome_mean(x, dgp.surrogate_mean(x, d))

    def gamma(x, m):
        return dgp.outcome_mean(x, m)

    def p_treat(x):
        p1 = dgp.treatment_prob(x)
        return p1 if d == 1 else 1.0 - p1

    def pi(x):
        return censor(p_treat(x), epsilon)

    def rho(x, m):
        x = np.atleast_2d(x)
        p1 = dgp.treatment_prob(x)
        l1 = _surrogate_loglik(dgp, x, m, 1.0)
        l0 = _surrogate_loglik(dgp, x, m, 0.0)
        # P(D=1 | x, m) = 1 / (1 + (1-p1)/p1 * exp(l0 - l1))
        post1 = expit(np.log(p1) - np.log1p(-p1) + l1 - l0)
        return censor(post1 if d == 1 else 1.0 - post1, epsilon)

    def pi_prime(x):
        return censor(dgp.selection_prob(x), epsilon)

    def rho_prime(x, m):
        return censor(dgp.selection_prob(x), epsilon)

    return NuisanceSet(nu, gamma, pi, rho, pi_prime, rho_prime, d, float(epsilon), {})
