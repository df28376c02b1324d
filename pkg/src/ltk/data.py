"""Fused experimental/observational datasets, CSV I/O and fold partitions.

A fused row is ``(G, X, D', M, Y')`` with ``D' = (1 - G) * D`` and
``Y' = G * Y``: treatment is only observed in the experimental group (G = 0)
and the long-term outcome only in the observational group (G = 1). The
structurally missing entry is stored as 0.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .errors import ValidationError

log = logging.getLogger(__name__)

CONTINUOUS = "continuous"
BINARY = "binary"

MAX_FOLD_ATTEMPTS = 100


class FusedSample(NamedTuple):
    g: int
    x: np.ndarray
    d: float
    m: np.ndarray
    y: float


@dataclass(frozen=True, eq=False)
class FusedDataset:
    """Validated fused sample. Arrays are read-only after construction.

    Attributes
    ----------
    g : (n,) int array of selection indicators.
    x : (n, p) covariates.
    d : (n,) treatment, 0 on observational rows.
    m : (n, q) surrogates.
    y : (n,) outcome, 0 on experimental rows.
    treatment : ``"continuous"`` or ``"binary"``.
    normalized : number of rows whose structurally missing entry was reset to 0.
    """

    g: np.ndarray
    x: np.ndarray
    d: np.ndarray
    m: np.ndarray
    y: np.ndarray
    treatment: str = CONTINUOUS
    normalized: int = field(default=0)

    @classmethod
    def from_arrays(cls, g, x, d, m, y, treatment=None) -> "FusedDataset":
        """Build a dataset, enforcing the fused encoding.

        Non-zero ``d`` on observational rows and non-zero ``y`` on experimental
        rows are reset to 0; the number of affected rows is kept in
        ``normalized``. NaN in those structural slots is treated the same way.
        """
        g = np.asarray(g)
        x = np.asarray(x, dtype=float)
        m = np.asarray(m, dtype=float)
        d = np.asarray(d, dtype=float).copy()
        y = np.asarray(y, dtype=float).copy()
        if x.ndim == 1:
            x = x[:, None]
        if m.ndim == 1:
            m = m[:, None]
        n = g.shape[0]
        if g.ndim != 1 or any(a.shape[0] != n for a in (x, d, m, y)):
            raise ValidationError("g, x, d, m, y must have the same number of rows")
        if d.ndim != 1 or y.ndim != 1:
            raise ValidationError("d and y must be one-dimensional")
        if not np.all(np.isin(g, (0, 1))):
            raise ValidationError("g must take values in {0, 1}")
        g = g.astype(np.int64)
        exp = g == 0
        obs = ~exp

        bad_d = obs & ((d != 0) | np.isnan(d))
        bad_y = exp & ((y != 0) | np.isnan(y))
        d[obs] = 0.0
        y[exp] = 0.0
        normalized = int(np.count_nonzero(bad_d | bad_y))

        if not exp.any():
            raise ValidationError("experimental group empty (no rows with g=0)")
        if not obs.any():
            raise ValidationError("observational group empty (no rows with g=1)")
        for name, arr in (("x", x), ("d", d), ("m", m), ("y", y)):
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"non-finite values in {name}")

        if treatment is None:
            treatment = BINARY if np.all(np.isin(d[exp], (0.0, 1.0))) else CONTINUOUS
        if treatment not in (CONTINUOUS, BINARY):
            raise ValidationError(f"unknown treatment kind {treatment!r}")
        if treatment == BINARY and not np.all(np.isin(d[exp], (0.0, 1.0))):
            raise ValidationError("binary treatment requires d in {0, 1} on experimental rows")
        if np.abs(y).max() > 1e6:
            log.warning("outcomes exceed 1e6 in magnitude; bounded outcomes are assumed")

        for arr in (g, x, d, m, y):
            arr.setflags(write=False)
        return cls(g, x, d, m, y, treatment, normalized)

    @property
    def n(self) -> int:
        return self.g.shape[0]

    @property
    def n_exp(self) -> int:
        return int(np.count_nonzero(self.g == 0))

    @property
    def n_obs(self) -> int:
        return int(np.count_nonzero(self.g == 1))

    @property
    def x_dim(self) -> int:
        return self.x.shape[1]

    @property
    def m_dim(self) -> int:
        return self.m.shape[1]

    @property
    def is_binary(self) -> bool:
        return self.treatment == BINARY

    def __len__(self):
        return self.n

    def row(self, i: int) -> FusedSample:
        return FusedSample(int(self.g[i]), self.x[i], float(self.d[i]), self.m[i], float(self.y[i]))

    def subset(self, idx) -> "FusedDataset":
        idx = np.asarray(idx)
        return FusedDataset.from_arrays(self.g[idx], self.x[idx], self.d[idx], self.m[idx],
                                        self.y[idx], self.treatment)

    def with_outcome(self, y) -> "FusedDataset":
        return FusedDataset.from_arrays(self.g, self.x, self.d, self.m, y, self.treatment)

    def to_csv(self, path) -> None:
        write_fused_csv(self, path)


def _header(p, q):
    return ["g", *(f"x_{j + 1}" for j in range(p)), "d", *(f"m_{j + 1}" for j in range(q)), "y"]


def _fmt(v: float) -> str:
    # repr round-trips float64 exactly
    return repr(float(v))


def write_fused_csv(ds: FusedDataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(_header(ds.x_dim, ds.m_dim))
        for i in range(ds.n):
            exp = ds.g[i] == 0
            w.writerow([int(ds.g[i]), *map(_fmt, ds.x[i]), _fmt(ds.d[i]) if exp else "",
                        *map(_fmt, ds.m[i]), "" if exp else _fmt(ds.y[i])])


def _parse_header(header, path):
    header = [h.strip() for h in header]
    cols = {h: i for i, h in enumerate(header)}
    missing = [c for c in ("g", "d", "y", "x_1", "m_1") if c not in cols]
    if missing:
        raise ValidationError(f"{path}: missing columns {missing}")
    p = 0
    while f"x_{p + 1}" in cols:
        p += 1
    q = 0
    while f"m_{q + 1}" in cols:
        q += 1
    return cols, p, q


def _cell(row, j, lineno, name, path, allow_empty):
    raw = row[j].strip() if j < len(row) else ""
    if raw == "":
        if allow_empty:
            return np.nan
        raise ValidationError(f"{path}:{lineno}: empty value in column {name}")
    try:
        return float(raw)
    except ValueError:
        raise ValidationError(f"{path}:{lineno}: non-numeric value {raw!r} in column {name}") from None


def load_fused_csv(path, treatment=None) -> FusedDataset:
    """Read a fused CSV with header ``g,x_1..x_p,d,m_1..m_q,y``.

    ``d`` may be empty on observational rows and ``y`` on experimental rows.
    Values present where they are structurally absent are zeroed and counted
    in ``FusedDataset.normalized``.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        cols, p, q = _parse_header(header, path)
        g, x, d, m, y = [], [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            gi = _cell(row, cols["g"], lineno, "g", path, False)
            if gi not in (0.0, 1.0):
                raise ValidationError(f"{path}:{lineno}: g must be 0 or 1, got {gi}")
            g.append(int(gi))
            x.append([_cell(row, cols[f"x_{j + 1}"], lineno, f"x_{j + 1}", path, False)
                      for j in range(p)])
            m.append([_cell(row, cols[f"m_{j + 1}"], lineno, f"m_{j + 1}", path, False)
                      for j in range(q)])
            d.append(_cell(row, cols["d"], lineno, "d", path, gi == 1))
            y.append(_cell(row, cols["y"], lineno, "y", path, gi == 0))
    if not g:
        raise ValidationError(f"{path}: no data rows")
    x = np.asarray(x, dtype=float).reshape(len(g), p)
    m = np.asarray(m, dtype=float).reshape(len(g), q)
    d = np.asarray(d, dtype=float)
    y = np.asarray(y, dtype=float)
    ga = np.asarray(g)
    # an empty structural slot is the normal encoding; any value there is a repair
    present = ((ga == 1) & ~np.isnan(d)) | ((ga == 0) & ~np.isnan(y))
    d[ga == 1] = 0.0
    y[ga == 0] = 0.0
    ds = FusedDataset.from_arrays(ga, x, d, m, y, treatment)
    ds = replace(ds, normalized=int(np.count_nonzero(present)))
    if ds.normalized:
        log.warning("%s: %d rows had values in structurally missing d/y slots; set to 0",
                    path, ds.normalized)
    return ds


@dataclass(frozen=True, eq=False)
class AltPopulation:
    """Covariate draws from an alternative population."""

    x: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] == 0:
            raise ValidationError("alternative population must be a non-empty (n, p) array")
        if not np.all(np.isfinite(x)):
            raise ValidationError("non-finite covariates in alternative population")
        x.setflags(write=False)
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def check_against(self, ds: FusedDataset) -> None:
        if self.x.shape[1] != ds.x_dim:
            raise ValidationError(
                f"alternative population has {self.x.shape[1]} covariates, dataset has {ds.x_dim}")


def load_alt_csv(path) -> AltPopulation:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        p = 0
        while f"x_{p + 1}" in header:
            p += 1
        if p == 0:
            raise ValidationError(f"{path}: missing columns ['x_1']")
        idx = [header.index(f"x_{j + 1}") for j in range(p)]
        rows = [[_cell(r, j, lineno, f"x_{k + 1}", path, False) for k, j in enumerate(idx)]
                for lineno, r in enumerate(reader, start=2) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    return AltPopulation(np.asarray(rows, dtype=float))


def write_alt_csv(alt: AltPopulation, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"x_{j + 1}" for j in range(alt.x.shape[1])])
        for row in alt.x:
            w.writerow([_fmt(v) for v in row])


@dataclass(frozen=True, eq=False)
class FoldPartition:
    """Fold labels in ``0..L-1`` (0-based) for each sample."""

    assignments: np.ndarray
    L: int

    def indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def complement(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.L)


def split_folds(n: int, L: int, seed=None, groups=None) -> FoldPartition:
    """Uniformly random balanced partition of ``range(n)`` into ``L`` folds.

    With ``groups`` (the G column) the draw is repeated, up to 100 times,
    until every fold complement contains both groups.
    """
    if L < 2:
        raise ValidationError("need at least two folds")
    if n < 2 * L:
        raise ValidationError(f"n={n} is too small for {L} folds (need n >= {2 * L})")
    rng = np.random.default_rng(seed)
    base = np.arange(n) % L
    for _ in range(MAX_FOLD_ATTEMPTS):
        assign = base[rng.permutation(n)]
        if groups is None:
            return FoldPartition(assign, L)
        groups = np.asarray(groups)
        if all(np.unique(groups[assign != f]).size == 2 for f in range(L)):
            return FoldPartition(assign, L)
    raise ValidationError(
        f"could not find a fold split whose complements contain both groups "
        f"after {MAX_FOLD_ATTEMPTS} attempts")
