"""Monte-Carlo experiments: synthetic pools, replication runner, DC baseline.

Every replication owns a seed stream derived from ``(seed, replication)``,
so results do not depend on the order or process in which replications run.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from .aggregate import contains, max_axis
from .estimator import fit_pool
from .pool import DataPool
from .seqcore import ProcedureConfig
from .shrinkage import AseConfig

__all__ = [
    "ScenarioConfig",
    "RunReport",
    "SCENARIOS",
    "scenario",
    "gen_clean",
    "gen_contaminated",
    "metrics",
    "run_psm_experiment",
    "run_dc",
    "format_table",
]


@dataclass(frozen=True)
class ScenarioConfig:
    beta0: tuple
    covariate_mean: float = 1.0
    intercept: bool = True
    pool_size: int = 6000
    contamination_rho: float = 0.0
    beta_noise: Optional[tuple] = None
    M: int = 1
    d: float = 0.2
    alpha: float = 0.05
    selection: str = "random"
    ase: Optional[AseConfig] = None
    n0: Optional[int] = None
    pool_mode: str = "partitioned"
    executor: str = "sequential"
    reps: int = 500
    seed: int = 0
    n_jobs: int = 1
    audit: bool = False
    name: str = ""

    def __post_init__(self):
        if not 0.0 <= self.contamination_rho < 1.0:
            raise ValueError(f"contamination_rho must be in [0, 1), got {self.contamination_rho}")
        if self.beta_noise is not None and len(self.beta_noise) != len(self.beta0):
            raise ValueError("beta_noise and beta0 must have the same length")
        if self.reps < 1:
            raise ValueError("reps must be at least 1")

    @property
    def p(self) -> int:
        return len(self.beta0)

    def noise_coefficients(self) -> np.ndarray:
        if self.beta_noise is not None:
            return np.asarray(self.beta_noise, dtype=float)
        return np.array([-5.0] + [5.0] * (self.p - 1))

    def procedure_config(self) -> ProcedureConfig:
        return ProcedureConfig(
            d=self.d,
            alpha=self.alpha,
            M=self.M,
            n0=self.n0,
            selection=self.selection,
            ase=self.ase,
        )

    def describe(self) -> Dict:
        out = asdict(self)
        out["ase"] = None if self.ase is None else asdict(self.ase)
        out["beta0"] = list(self.beta0)
        out["beta_noise"] = list(self.noise_coefficients())
        for key in ("n_jobs", "executor", "audit"):
            out.pop(key)
        return out


SCENARIOS = {
    "s1": dict(beta0=(-1.0, 1.0), covariate_mean=1.0),
    "s2": dict(beta0=(-1.0, 1.0, 0.7, 0.5, 0.2), covariate_mean=0.2),
    "ase1": dict(beta0=(-2.0, 1.0, 1.5, 2.0) + (0.0,) * 6, covariate_mean=0.2, ase=AseConfig()),
    "ase2": dict(beta0=(-2.0, 2.0, 2.0, 2.0) + (0.0,) * 46, covariate_mean=0.2, ase=AseConfig()),
    # 20 standard-normal covariates, no intercept: the DC-vs-M study.
    "wide20": dict(beta0=(1.0,) * 20, covariate_mean=0.0, intercept=False),
}


def scenario(name: str, **overrides) -> ScenarioConfig:
    """Build a named scenario with keyword overrides."""
    try:
        base = dict(SCENARIOS[name])
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}") from None
    base.update(overrides)
    base.setdefault("name", name)
    return ScenarioConfig(**base)


def _covariates(cfg: ScenarioConfig, n: int, rng) -> np.ndarray:
    if cfg.intercept:
        Z = rng.normal(cfg.covariate_mean, 1.0, size=(n, cfg.p - 1))
        return np.column_stack([np.ones(n), Z])
    return rng.normal(cfg.covariate_mean, 1.0, size=(n, cfg.p))


def gen_clean(cfg: ScenarioConfig, n: int, rng, noise: bool = True):
    """Draw ``n`` rows from the scenario's regression model.

    Returns ``(X, y)``. ``noise=False`` drops the error term.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    X = _covariates(cfg, n, rng)
    y = X @ np.asarray(cfg.beta0, dtype=float)
    if noise:
        y = y + rng.standard_normal(n)
    return X, y


def gen_contaminated(cfg: ScenarioConfig, rng):
    """Clean pool plus ``round(rho * pool_size)`` rows from the noise model, shuffled.

    Returns ``(X, y, is_noise)``.
    """
    X, y = gen_clean(cfg, cfg.pool_size, rng)
    n_bad = int(round(cfg.contamination_rho * cfg.pool_size))
    is_noise = np.zeros(cfg.pool_size + n_bad, dtype=bool)
    if n_bad:
        Xb = _covariates(cfg, n_bad, rng)
        yb = Xb @ cfg.noise_coefficients() + rng.standard_normal(n_bad)
        X = np.vstack([X, Xb])
        y = np.concatenate([y, yb])
        is_noise[cfg.pool_size:] = True
    order = rng.permutation(X.shape[0])
    return X[order], y[order], is_noise[order]


def metrics(beta_hat, beta0):
    """Squared error and absolute deviation of an estimate."""
    diff = np.asarray(beta_hat, dtype=float) - np.asarray(beta0, dtype=float)
    return float(diff @ diff), float(np.abs(diff).sum())


def _boundary_points(ellipsoid, k: int, rng) -> np.ndarray:
    # z = c + sqrt(r) L^{-T} u with shape = L L^T and |u| = 1 lies on the boundary.
    L = np.linalg.cholesky(ellipsoid.shape)
    u = rng.standard_normal((k, ellipsoid.center.shape[0]))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    steps = np.linalg.solve(L.T, u.T).T
    return ellipsoid.center + np.sqrt(ellipsoid.radius) * steps


def _rep_seeds(seed: int, rep: int):
    return np.random.SeedSequence(seed, spawn_key=(rep,)).spawn(3)


def _psm_replication(cfg: ScenarioConfig, rep: int) -> Dict:
    data_ss, fit_ss, audit_ss = _rep_seeds(cfg.seed, rep)
    X, y, _ = gen_contaminated(cfg, np.random.default_rng(data_ss))
    pool = DataPool(X, y, mode=cfg.pool_mode)
    fit = fit_pool(pool, cfg.procedure_config(), fit_ss, executor=cfg.executor)
    pool.audit()
    beta0 = np.asarray(cfg.beta0, dtype=float)
    est = fit.estimate
    se, ad = metrics(est.beta_hat, beta0)
    out = {
        "n_stop": est.N_star,
        "n_per_procedure": [r.N for r in fit.results],
        "se": se,
        "ad": ad,
        "elapsed": max(r.elapsed for r in fit.results),
        "exhausted": est.exhausted,
    }
    if fit.ase is not None:
        out["cover_ase"] = contains(fit.ase, beta0)
        out["p0_hat"] = est.p0_hat
        out["max_axis_ase"] = max_axis(fit.ase)
    else:
        out["cover_exact"] = contains(fit.exact, beta0)
        out["cover_approx"] = contains(fit.approx, beta0)
        out["max_axis_exact"] = max_axis(fit.exact)
        out["max_axis_approx"] = max_axis(fit.approx)
        if cfg.audit:
            pts = _boundary_points(fit.approx, 100, np.random.default_rng(audit_ss))
            slack = fit.exact.radius * (1.0 + 1e-9)
            out["containment_failures"] = int(
                sum(fit.exact.quad_form(z) > slack for z in pts)
            )
    return out


def _run_reps(fn, cfg: ScenarioConfig) -> List[Dict]:
    if cfg.n_jobs == 1:
        return [fn(cfg, r) for r in range(cfg.reps)]
    return Parallel(n_jobs=cfg.n_jobs)(delayed(fn)(cfg, r) for r in range(cfg.reps))


def _mean_sd(values) -> Dict[str, float]:
    a = np.asarray(values, dtype=float)
    sd = float(a.std(ddof=1)) if a.size > 1 else 0.0
    return {"mean": float(a.mean()), "sd": sd}


@dataclass
class RunReport:
    """Per-replication records of one experiment plus their summary."""

    method: str
    config: Dict
    records: List[Dict] = field(repr=False)

    def _column(self, key):
        vals = [r[key] for r in self.records if key in r]
        return vals if vals else None

    def summary(self, include_timing: bool = False) -> Dict:
        out = {
            "method": self.method,
            "reps": len(self.records),
            "n_stop": _mean_sd(self._column("n_stop")),
            "se": _mean_sd(self._column("se")),
            "ad": _mean_sd(self._column("ad")),
            "coverage_exact": None,
            "coverage_approx": None,
            "coverage_ase": None,
            "p0_hat": None,
            "exhausted_reps": int(sum(bool(r.get("exhausted")) for r in self.records)),
            "config": self.config,
        }
        per = self._column("n_per_procedure")
        out["per_procedure"] = [_mean_sd(col) for col in np.asarray(per).T] if per else []
        for key in ("cover_exact", "cover_approx", "cover_ase"):
            col = self._column(key)
            if col is not None:
                out["coverage_" + key[len("cover_"):]] = float(np.mean(col))
        p0 = self._column("p0_hat")
        if p0 is not None:
            out["p0_hat"] = _mean_sd(p0)
        geometry = {}
        for key in ("max_axis_exact", "max_axis_approx", "max_axis_ase"):
            col = self._column(key)
            if col is not None:
                geometry[key] = float(np.max(col))
        col = self._column("containment_failures")
        if col is not None:
            geometry["containment_failures"] = int(np.sum(col))
        out["geometry"] = geometry
        if include_timing:
            out["time"] = _mean_sd(self._column("elapsed"))
        return _rounded(out)

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(self.summary(include_timing), sort_keys=True, indent=2)

    @property
    def n_stop(self) -> np.ndarray:
        return np.asarray(self._column("n_stop"), dtype=float)


def _rounded(obj):
    if isinstance(obj, float):
        return float(f"{obj:.12g}")
    if isinstance(obj, dict):
        return {k: _rounded(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_rounded(v) for v in obj]
    if isinstance(obj, np.generic):
        return _rounded(obj.item())
    return obj


def run_psm_experiment(cfg: ScenarioConfig) -> RunReport:
    """Monte-Carlo run of the merged sequential procedure (``M = 1`` is SM)."""
    records = _run_reps(_psm_replication, cfg)
    method = "SM" if cfg.M == 1 else "PSM"
    return RunReport(method=method, config=cfg.describe(), records=records)


def _dc_replication(cfg: ScenarioConfig, rep: int) -> Dict:
    data_ss, fit_ss, _ = _rep_seeds(cfg.seed, rep)
    X, y, _ = gen_contaminated(cfg, np.random.default_rng(data_ss))
    t0 = time.perf_counter()
    perm = np.random.default_rng(fit_ss).permutation(X.shape[0])
    estimates = []
    failures = 0
    for block in np.array_split(perm, cfg.M):
        if block.size < cfg.p + 2:
            failures += 1
            continue
        coef, *_ = np.linalg.lstsq(X[block], y[block], rcond=None)
        estimates.append(coef)
    elapsed = time.perf_counter() - t0
    out = {"n_stop": X.shape[0], "elapsed": elapsed, "failed_partitions": failures}
    if estimates:
        out["se"], out["ad"] = metrics(np.mean(estimates, axis=0), cfg.beta0)
    return out


def run_dc(cfg: ScenarioConfig) -> RunReport:
    """Divide-and-conquer baseline: equal partitions, per-partition LSE, plain average."""
    records = _run_reps(_dc_replication, cfg)
    report = RunReport(method="DC", config=cfg.describe(), records=records)
    return report


def _fmt(x) -> str:
    if x is None:
        return "-"
    return format(x, ".12g")


def format_table(reports: Sequence[RunReport], include_timing: bool = False) -> str:
    """Aligned text table: one row per report, numbers as in the JSON."""
    header = ["scenario", "d", "M", "method", "stopping time(sd)", "coverage", "SE(sd)", "AD(sd)", "p0_hat"]
    if include_timing:
        header.append("time(sd)")
    rows = [header]
    for rep in reports:
        s = rep.summary(include_timing)
        cfg = s["config"]
        covs = [s[k] for k in ("coverage_exact", "coverage_approx") if s[k] is not None]
        if s["coverage_ase"] is not None:
            covs = [s["coverage_ase"]]
        if not covs:
            cov = "-"
        elif s["method"] == "PSM" and len(covs) == 2:
            cov = "(" + ",".join(_fmt(c) for c in covs) + ")"
        else:
            cov = _fmt(covs[0])
        p0 = s["p0_hat"]
        row = [
            cfg.get("name") or "-",
            _fmt(cfg["d"]) if s["method"] != "DC" else "-",
            str(cfg["M"]),
            s["method"],
            f"{_fmt(s['n_stop']['mean'])}({_fmt(s['n_stop']['sd'])})",
            cov,
            f"{_fmt(s['se']['mean'])}({_fmt(s['se']['sd'])})",
            f"{_fmt(s['ad']['mean'])}({_fmt(s['ad']['sd'])})",
            "-" if p0 is None else f"{_fmt(p0['mean'])}({_fmt(p0['sd'])})",
        ]
        if include_timing:
            row.append(f"{_fmt(s['time']['mean'])}({_fmt(s['time']['sd'])})")
        rows.append(row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows]
    lines.insert(1, "-" * len(lines[0]))
    return "\n".join(lines)
