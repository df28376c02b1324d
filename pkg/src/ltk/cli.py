"""Command-line front end.

Subcommands: ``simulate``, ``tune``, ``dose``, ``ate``, ``dist`` and ``herd``.
Each writes one JSON or CSV artifact and prints a one-line summary. Exit
status is 0 on success, 1 on invalid input and 2 on a numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from .data import load_alt_csv, load_fused_csv, write_alt_csv
from .distributions import (DistributionEmbedding, default_candidate_grid, embed_distribution,
                            embedding_candidate_grid, herd)
from .dose_response import Estimand, estimate_curve, parse_grid
from .dose_response import default_grid as default_treatment_grid
from .embeddings import EmbeddingModel, FusedGrams
from .errors import NumericalError, ValidationError
from .semiparametric import DEFAULT_EPSILON, DEFAULT_FOLDS, dml_estimate
from .synthetic import DGP_KINDS, generate, load_dgp, sample_alt_population
from .tuning import Hyperparameters, tune

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NUMERICAL = 2
THREADS_ENV = "LTK_THREADS"


class UsageError(Exception):
    """Bad command line; carries the usage text of the offending parser."""

    def __init__(self, message, usage):
        super().__init__(message)
        self.usage = usage


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; 2 is reserved for numerical errors here
    def error(self, message):
        raise UsageError(message, self.format_usage())


@dataclass
class RunConfig:
    """Resolved command parameters, checked for mutual consistency."""

    command: str
    out: str
    options: dict = field(default_factory=dict)

    def __getattr__(self, name):
        try:
            return self.options[name]
        except KeyError:
            raise AttributeError(name) from None

    def validate(self, dataset=None) -> None:
        est = self.options.get("estimand")
        if est is not None and Estimand.parse(est) is Estimand.DS and not self.options.get("alt"):
            raise ValidationError("estimand 'ds' requires --alt with alternative-population covariates")
        if self.command == "ate" and dataset is not None and not dataset.is_binary:
            raise ValidationError("'ate' requires a binary treatment")
        level = self.options.get("level")
        if level is not None and not 0 < level < 1:
            raise ValidationError(f"--level must be in (0, 1), got {level}")
        eps = self.options.get("epsilon")
        if eps is not None and not 0 < eps < 0.5:
            raise ValidationError(f"--epsilon must be in (0, 0.5), got {eps}")


def parse_lambda_grid(text: str) -> np.ndarray:
    """``start:stop:count`` -> ``count`` log-spaced penalties."""
    grid = parse_grid(text)
    if grid[0] <= 0 or grid[-1] <= 0:
        raise ValidationError("penalty grid endpoints must be positive")
    return np.logspace(np.log10(grid[0]), np.log10(grid[-1]), grid.size)


def _threads(value):
    if value is None:
        value = os.environ.get(THREADS_ENV)
    if value in (None, ""):
        return None
    try:
        count = int(value)
    except ValueError:
        raise ValidationError(f"thread count must be an integer, got {value!r}") from None
    if count < 1:
        raise ValidationError("thread count must be at least 1")
    return count


def _write_text(path, text):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")


def _load_hyper(path):
    if path is None:
        return None
    with open(path, encoding="utf-8") as fh:
        return Hyperparameters.from_dict(json.load(fh))


def _alt(cfg):
    return load_alt_csv(cfg.alt) if cfg.options.get("alt") else None


def _fitted(dataset, cfg, need):
    """Kernels and penalties: from --hyper where given, LOOCV for the rest."""
    hp = _load_hyper(cfg.hyper)
    lam_grid = cfg.lambda_grid
    if hp is not None and all(getattr(hp, k) is not None for k in need):
        if "lam2" in need and hp.kernels.y is None:
            raise ValidationError("hyperparameter file has no outcome kernel")
        return hp, FusedGrams(dataset, hp.kernels)
    kernels = hp.kernels if hp is not None else None
    tuned, grams = tune(dataset, kernels, which=need, grid=lam_grid)
    if hp is not None:
        fixed = {k: getattr(hp, k) for k in need if getattr(hp, k) is not None}
        tuned = Hyperparameters(tuned.kernels, **{k: fixed.get(k, getattr(tuned, k))
                                                  for k in ("lam", "lam1", "lam2")})
    return tuned, grams


# -- subcommands -------------------------------------------------------------

def cmd_simulate(cfg: RunConfig) -> str:
    dgp = load_dgp(cfg.dgp) if cfg.dgp else DGP_KINDS[cfg.kind](treatment=cfg.treatment)
    ds = generate(dgp, cfg.n, cfg.seed)
    ds.to_csv(cfg.out)
    msg = f"simulate: wrote {ds.n} rows ({ds.n_exp} experimental, {ds.n_obs} observational) to {cfg.out}"
    if cfg.alt_out:
        alt = sample_alt_population(dgp, cfg.alt_n or cfg.n, cfg.alt_shift, cfg.seed)
        write_alt_csv(alt, cfg.alt_out)
        msg += f"; {alt.n} alternative-population rows to {cfg.alt_out}"
    return msg


def cmd_tune(cfg: RunConfig) -> str:
    ds = load_fused_csv(cfg.data)
    hp, _ = tune(ds, which=("lam", "lam1", "lam2"), grid=cfg.lambda_grid)
    _write_text(cfg.out, json.dumps(hp.to_dict(), indent=2))
    return (f"tune: lambda={hp.lam:.6g} lambda1={hp.lam1:.6g} lambda2={hp.lam2:.6g} "
            f"-> {cfg.out}")


def cmd_dose(cfg: RunConfig) -> str:
    ds = load_fused_csv(cfg.data)
    cfg.validate(ds)
    grid = parse_grid(cfg.grid) if cfg.grid else default_treatment_grid(ds)
    hp, grams = _fitted(ds, cfg, ("lam", "lam1"))
    model = EmbeddingModel(ds, hp.kernels, hp.lam1, grams=grams)
    curve = estimate_curve(ds, cfg.estimand, grid, hp.kernels, hp.lam, hp.lam1, _alt(cfg), model)
    curve.to_json(cfg.out)
    return (f"dose: {curve.estimand.value} curve at {grid.size} points, estimates in "
            f"[{curve.estimates.min():.6g}, {curve.estimates.max():.6g}] -> {cfg.out}")


def cmd_ate(cfg: RunConfig) -> str:
    ds = load_fused_csv(cfg.data)
    cfg.validate(ds)
    est = dml_estimate(ds, cfg.d, folds=cfg.folds, level=cfg.level, epsilon=cfg.epsilon,
                       seed=cfg.seed, grid=cfg.lambda_grid)
    est.to_json(cfg.out)
    return (f"ate: theta={est.theta:.6g} {est.level:.0%} CI [{est.ci_lower:.6g}, "
            f"{est.ci_upper:.6g}] -> {cfg.out}")


def cmd_dist(cfg: RunConfig) -> str:
    ds = load_fused_csv(cfg.data)
    cfg.validate(ds)
    hp, grams = _fitted(ds, cfg, ("lam1", "lam2"))
    model = EmbeddingModel(ds, hp.kernels, hp.lam1, grams=grams)
    emb = embed_distribution(ds, cfg.estimand, cfg.d, hp.kernels, hp.lam1, hp.lam2,
                             _alt(cfg), model)
    emb.to_json(cfg.out)
    return f"dist: {emb.estimand.value} embedding at d={emb.d:.6g}, mean {emb.mean():.6g} -> {cfg.out}"


def cmd_herd(cfg: RunConfig) -> str:
    if bool(cfg.embedding) == bool(cfg.data):
        raise ValidationError("herd needs exactly one of --embedding or --data")
    if cfg.embedding:
        emb = DistributionEmbedding.from_json(cfg.embedding)
        grid = embedding_candidate_grid(emb, cfg.grid_size)
    else:
        ds = load_fused_csv(cfg.data)
        cfg.validate(ds)
        hp, grams = _fitted(ds, cfg, ("lam1", "lam2"))
        model = EmbeddingModel(ds, hp.kernels, hp.lam1, grams=grams)
        emb = embed_distribution(ds, cfg.estimand, cfg.d, hp.kernels, hp.lam1, hp.lam2,
                                 _alt(cfg), model)
        grid = default_candidate_grid(ds, cfg.grid_size)
    sample = herd(emb, cfg.m, grid)
    sample.to_csv(cfg.out)
    return f"herd: {sample.values.size} samples, mean {sample.values.mean():.6g} -> {cfg.out}"


COMMANDS = {"simulate": cmd_simulate, "tune": cmd_tune, "dose": cmd_dose, "ate": cmd_ate,
            "dist": cmd_dist, "herd": cmd_herd}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ltk", description="Kernel estimators of long-term causal effects "
                     "from fused experimental and observational data.")
    parser.add_argument("--threads", type=int, default=None,
                        help=f"cap on worker threads (default: ${THREADS_ENV} or all cores)")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    def common(p, data=True):
        p.add_argument("--out", required=True, help="output path")
        if data:
            p.add_argument("--data", required=True, help="fused dataset CSV")
        p.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                       help=f"cap on worker threads (default: ${THREADS_ENV})")

    def lambda_grid(p):
        p.add_argument("--lambda-grid", dest="lambda_grid", type=parse_lambda_grid,
                       help="LOOCV penalty grid start:stop:count, log-spaced "
                            "(default: 20 values in [1e-6, 1] x trace(K)/n)")

    def estimand(p):
        p.add_argument("--estimand", default="ate", choices=[e.value for e in Estimand],
                       help="averaging population (default: ate)")
        p.add_argument("--alt", help="alternative-population covariate CSV (for ds)")
        p.add_argument("--hyper", help="hyperparameter JSON from 'tune'; missing penalties are tuned")
        lambda_grid(p)

    p = sub.add_parser("simulate", help="draw a synthetic fused dataset")
    common(p, data=False)
    p.add_argument("--n", type=int, required=True, help="number of rows")
    p.add_argument("--seed", type=int, default=0, help="random seed (default: 0)")
    p.add_argument("--dgp", help="DGP configuration JSON (overrides --kind/--treatment)")
    p.add_argument("--kind", choices=sorted(DGP_KINDS), default="linear",
                   help="built-in DGP (default: linear)")
    p.add_argument("--treatment", choices=["continuous", "binary"], default="continuous",
                   help="treatment type of the built-in DGP (default: continuous)")
    p.add_argument("--alt-out", dest="alt_out", help="also write alternative-population covariates here")
    p.add_argument("--alt-n", dest="alt_n", type=int, help="alternative-population size (default: --n)")
    p.add_argument("--alt-shift", dest="alt_shift", type=float, default=0.5,
                   help="covariate mean shift of the alternative population (default: 0.5)")

    p = sub.add_parser("tune", help="median-heuristic kernels and LOOCV penalties")
    common(p)
    lambda_grid(p)

    p = sub.add_parser("dose", help="dose-response curve")
    common(p)
    estimand(p)
    p.add_argument("--grid", help="treatment grid start:stop:count "
                                  "(default: 25 quantiles of the experimental treatment)")

    p = sub.add_parser("ate", help="debiased long-term mean with confidence interval")
    common(p)
    p.add_argument("--d", type=int, default=1, choices=[0, 1], help="treatment value (default: 1)")
    p.add_argument("--folds", type=int, default=DEFAULT_FOLDS, help="cross-fitting folds (default: 5)")
    p.add_argument("--level", type=float, default=0.95, help="confidence level (default: 0.95)")
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON,
                   help="propensity censoring level (default: 0.01)")
    p.add_argument("--seed", type=int, default=0, help="fold-assignment seed (default: 0)")
    lambda_grid(p)

    p = sub.add_parser("dist", help="counterfactual outcome distribution embedding")
    common(p)
    estimand(p)
    p.add_argument("--d", type=float, required=True, help="treatment value")

    p = sub.add_parser("herd", help="herded samples from a distribution embedding")
    p.add_argument("--out", required=True, help="output CSV (column y_tilde)")
    p.add_argument("--embedding", help="embedding JSON from 'dist'")
    p.add_argument("--data", help="fused dataset CSV (embedding is estimated first)")
    p.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                   help=f"cap on worker threads (default: ${THREADS_ENV})")
    estimand(p)
    p.add_argument("--d", type=float, help="treatment value (with --data)")
    p.add_argument("--m", type=int, default=500, help="number of samples (default: 500)")
    p.add_argument("--grid-size", dest="grid_size", type=int, default=512,
                   help="candidate grid points (default: 512)")
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(exc.usage)
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INVALID
    if args.command is None:
        sys.stderr.write(parser.format_usage())
        return EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    options = {k: v for k, v in vars(args).items() if k not in ("command", "out", "verbose")}
    cfg = RunConfig(args.command, args.out, options)
    try:
        threads = _threads(options.get("threads"))
        if threads is not None:
            _accel.set_threads(threads)
        if args.command == "herd" and cfg.data and cfg.d is None:
            raise ValidationError("herd --data needs --d")
        cfg.validate()
        print(COMMANDS[args.command](cfg))
    except (ValidationError, FileNotFoundError, IsADirectoryError, KeyError,
            json.JSONDecodeError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INVALID
    except (NumericalError, np.linalg.LinAlgError) as exc:
        sys.stderr.write(f"numerical error: {exc}\n")
        return EXIT_NUMERICAL
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
