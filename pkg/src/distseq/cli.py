"""Command-line interface: ``distseq simulate | fit | compare-dc``.

Exit status is 0 on success, 1 on a usage error and 2 when the run itself
fails (unreadable CSV, pool too small, ...).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from .aggregate import max_axis
from .estimator import fit_pool
from .pool import DataPool
from .seqcore import ProcedureConfig
from .shrinkage import AseConfig
from . import simlab

__all__ = ["Dataset", "DataError", "load_csv", "build_parser", "main"]


class DataError(ValueError):
    """The input file cannot be turned into a usable dataset."""


class UsageError(Exception):
    pass


@dataclass
class Dataset:
    """Numeric design and response read from a CSV file.

    When ``standardized`` is true, ``X`` and ``y`` hold z-scores and
    ``means``/``sds`` (covariates first, response last) record the transform.
    """

    X: np.ndarray
    y: np.ndarray
    covariates: List[str]
    response: str
    standardized: bool = False
    means: Optional[np.ndarray] = None
    sds: Optional[np.ndarray] = None
    n_dropped: int = 0

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def response_to_raw(self, y_std):
        """Map standardized responses (or predictions) back to the raw scale."""
        if not self.standardized:
            return np.asarray(y_std, dtype=float)
        return self.means[-1] + self.sds[-1] * np.asarray(y_std, dtype=float)

    def coef_to_raw(self, coef, intercept: float = 0.0):
        """Raw-scale ``(intercept, coef)`` for a fit on the standardized data."""
        coef = np.asarray(coef, dtype=float)
        if not self.standardized:
            return float(intercept), coef
        raw = self.sds[-1] * coef / self.sds[:-1]
        raw_intercept = self.means[-1] + self.sds[-1] * intercept - float(raw @ self.means[:-1])
        return float(raw_intercept), raw


def load_csv(path, response: str, covariates: Optional[Sequence[str]] = None, standardize: bool = True) -> Dataset:
    """Read a headed, comma-separated file into a :class:`Dataset`.

    Rows with a missing or non-numeric entry in any selected column are
    dropped. ``covariates=None`` selects every column except ``response``.
    """
    frame = pd.read_csv(path, dtype=str, skipinitialspace=True)
    if response not in frame.columns:
        raise DataError(f"response column {response!r} not found in {path}")
    if covariates is None:
        covariates = [c for c in frame.columns if c != response]
    covariates = list(covariates)
    missing = [c for c in covariates if c not in frame.columns]
    if missing:
        raise DataError(f"covariate column(s) not found in {path}: {', '.join(missing)}")
    if not covariates:
        raise DataError("no covariate columns selected")
    cols = covariates + [response]
    numeric = frame[cols].apply(pd.to_numeric, errors="coerce")
    keep = numeric.notna().all(axis=1) & np.isfinite(numeric).all(axis=1)
    data = numeric[keep].to_numpy(dtype=float)
    dropped = int((~keep).sum())
    if data.shape[0] == 0:
        raise DataError(f"no usable rows left in {path} after dropping missing values")
    means = sds = None
    if standardize:
        means = data.mean(axis=0)
        sds = data.std(axis=0, ddof=1)
        if data.shape[0] < 2 or np.any(sds == 0):
            raise DataError("cannot standardize a constant column")
        data = (data - means) / sds
    return Dataset(
        X=data[:, :-1],
        y=data[:, -1],
        covariates=covariates,
        response=response,
        standardized=standardize,
        means=means,
        sds=sds,
        n_dropped=dropped,
    )


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--d", type=float, default=0.2, help="half of the maximum ellipsoid axis")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--m", type=int, default=1, help="number of procedures")
    p.add_argument("--n0", type=int, default=None, help="initial sample per procedure (default p + 5)")
    p.add_argument("--selection", choices=["random", "doptimal"], default="random")
    p.add_argument("--pool", choices=["partitioned", "shared"], default="partitioned")
    p.add_argument("--ase", action="store_true", help="adaptive shrinkage variable selection")
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--epsilon", type=float, default=1.0)
    p.add_argument("--lambda-exponent", type=float, default=0.75)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", type=Path, default=None, help="write OUT.json and OUT.txt")
    p.add_argument("--format", choices=["json", "table"], default="table", help="what to print on stdout")
    p.add_argument("--executor", choices=["sequential", "parallel"], default="sequential")
    p.add_argument("--timing", action="store_true", help="include wall-clock columns")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_simulation(p: argparse.ArgumentParser):
    p.add_argument("--scenario", choices=sorted(simlab.SCENARIOS), default="s1")
    p.add_argument("--reps", type=int, default=500)
    p.add_argument("--contamination-rho", type=float, default=0.0)
    p.add_argument("--pool-size", type=int, default=6000)
    p.add_argument("--covariate-mean", type=float, default=None)
    p.add_argument("--jobs", type=int, default=1, help="replications run in parallel")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="distseq", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="Monte-Carlo run of the sequential procedure")
    _add_common(sim)
    _add_simulation(sim)

    fit = sub.add_parser("fit", help="fit a CSV data set")
    _add_common(fit)
    fit.add_argument("--csv", type=Path, required=True)
    fit.add_argument("--response", required=True)
    fit.add_argument("--covariates", default=None, help="comma-separated column names (default: all others)")
    fit.add_argument("--standardize", action=argparse.BooleanOptionalAction, default=True)
    fit.add_argument("--intercept", action="store_true")

    dc = sub.add_parser("compare-dc", help="sequential procedure against divide-and-conquer")
    _add_common(dc)
    _add_simulation(dc)
    dc.add_argument("--dc-m", type=int, default=None, help="partitions for DC (default: --m)")
    return parser


def _ase_config(args) -> Optional[AseConfig]:
    if not args.ase:
        return None
    return AseConfig(lambda_exponent=args.lambda_exponent, gamma=args.gamma, epsilon=args.epsilon)


def _selection(args) -> str:
    return "d-optimal" if args.selection == "doptimal" else "random"


def _scenario(args, **extra) -> simlab.ScenarioConfig:
    overrides = dict(
        M=args.m,
        d=args.d,
        alpha=args.alpha,
        selection=_selection(args),
        n0=args.n0,
        pool_mode=args.pool,
        executor=args.executor,
        reps=args.reps,
        seed=args.seed,
        n_jobs=args.jobs,
        contamination_rho=args.contamination_rho,
        pool_size=args.pool_size,
    )
    if args.ase:
        overrides["ase"] = _ase_config(args)
    if args.covariate_mean is not None:
        overrides["covariate_mean"] = args.covariate_mean
    overrides.update(extra)
    return simlab.scenario(args.scenario, **overrides)


def cmd_simulate(args) -> Dict:
    report = simlab.run_psm_experiment(_scenario(args))
    return {
        "json": report.summary(args.timing),
        "table": simlab.format_table([report], include_timing=args.timing),
    }


def cmd_compare_dc(args) -> Dict:
    psm = simlab.run_psm_experiment(_scenario(args))
    dc_m = args.dc_m if args.dc_m is not None else args.m
    dc = simlab.run_dc(_scenario(args, M=dc_m))
    return {
        "json": {"psm": psm.summary(args.timing), "dc": dc.summary(args.timing)},
        "table": simlab.format_table([psm, dc], include_timing=args.timing),
    }


def cmd_fit(args) -> Dict:
    covariates = None
    if args.covariates:
        covariates = [c.strip() for c in args.covariates.split(",") if c.strip()]
    data = load_csv(args.csv, args.response, covariates, standardize=args.standardize)
    names = list(data.covariates)
    X = data.X
    if args.intercept:
        X = np.column_stack([np.ones(data.n), X])
        names = ["intercept"] + names
    p = X.shape[1]
    if data.n < p + 2:
        raise DataError(f"need at least p + 2 = {p + 2} rows, have {data.n}")
    cfg = ProcedureConfig(
        d=args.d,
        alpha=args.alpha,
        M=args.m,
        n0=args.n0,
        selection=_selection(args),
        ase=_ase_config(args),
    )
    fit = fit_pool(DataPool(X, data.y, mode=args.pool), cfg, args.seed, executor=args.executor)
    est = fit.estimate
    region = fit.ase if fit.ase is not None else fit.exact
    beta = est.beta_hat
    if args.intercept:
        raw_intercept, raw_coef = data.coef_to_raw(beta[1:], beta[0])
    else:
        raw_intercept, raw_coef = data.coef_to_raw(beta)
    out = {
        "n_rows": data.n,
        "n_dropped": data.n_dropped,
        "standardized": data.standardized,
        "variables": names,
        "beta_hat": beta.tolist(),
        "beta_raw": {"intercept": raw_intercept, "coef": raw_coef.tolist()},
        "sigma2_hat": est.sigma2_hat,
        "n_stop": est.N_star,
        "per_procedure": [r.N for r in fit.results],
        "exhausted": est.exhausted,
        "ellipsoid": {
            "radius": region.radius,
            "max_axis": max_axis(region),
            "max_axis_approx": None if fit.approx is None else max_axis(fit.approx),
        },
        "selected": None,
    }
    if est.indicator_star is not None:
        out["selected"] = [n for n, k in zip(names, est.indicator_star) if k]
    out = simlab._rounded(out)
    return {"json": out, "table": _fit_table(out)}


def _fit_table(out: Dict) -> str:
    fmt = simlab._fmt
    selected = out["selected"]
    rows = [["variable", "beta_hat", "selected"]]
    for name, b in zip(out["variables"], out["beta_hat"]):
        mark = "-" if selected is None else ("yes" if name in selected else "no")
        rows.append([name, fmt(b), mark])
    widths = [max(len(r[i]) for r in rows) for i in range(3)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
    lines.insert(1, "-" * len(lines[0]))
    flag = " *" if out["exhausted"] else ""
    lines += [
        "",
        f"N* = {out['n_stop']}{flag}  (per procedure: {', '.join(map(str, out['per_procedure']))})",
        f"sigma2_hat = {fmt(out['sigma2_hat'])}",
        f"max axis = {fmt(out['ellipsoid']['max_axis'])}",
    ]
    if out["exhausted"]:
        lines.append("* the stopping criterion was not satisfied before the data ran out")
    return "\n".join(lines)


def _exhausted_runs(out: Dict) -> int:
    if "exhausted" in out:
        return int(out["exhausted"])
    if "exhausted_reps" in out:
        return out["exhausted_reps"]
    return sum(_exhausted_runs(v) for v in out.values() if isinstance(v, dict))


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "compare-dc": cmd_compare_dc}


def _validate(args):
    if args.d <= 0:
        raise UsageError("--d must be positive")
    if not 0 < args.alpha < 1:
        raise UsageError("--alpha must be in (0, 1)")
    if args.m < 1:
        raise UsageError("--m must be at least 1")
    if getattr(args, "reps", 1) < 1:
        raise UsageError("--reps must be at least 1")
    rho = getattr(args, "contamination_rho", 0.0)
    if not 0 <= rho < 1:
        raise UsageError("--contamination-rho must be in [0, 1)")
    if args.ase and not 0.5 < args.lambda_exponent < 1:
        raise UsageError("--lambda-exponent must be in (0.5, 1)")


def _emit(args, result: Dict):
    text = json.dumps(result["json"], sort_keys=True, indent=2)
    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.with_suffix(".json").write_text(text + "\n")
        args.out.with_suffix(".txt").write_text(result["table"] + "\n")
    print(text if args.format == "json" else result["table"])


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.ERROR,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        _validate(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"distseq: error: {exc}", file=sys.stderr)
        return 1
    if args.seed is None:
        args.seed = int(np.random.SeedSequence().entropy % 2**63)
        print(f"seed: {args.seed}", file=sys.stderr)
    try:
        result = COMMANDS[args.command](args)
        n_bad = _exhausted_runs(result["json"])
        if n_bad:
            print(f"distseq: warning: {n_bad} run(s) ran out of data before the stopping rule held", file=sys.stderr)
        _emit(args, result)
    except (DataError, ValueError, OSError, np.linalg.LinAlgError) as exc:
        print(f"distseq: error: {exc}", file=sys.stderr)
        return 2
    return 0


def main_entry():
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
