"""scikit-learn compatible front end for parallel sequential estimation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_random_state, check_X_y

from .aggregate import (
    CombinedEstimate,
    ConfidenceEllipsoid,
    combine,
    ellipsoid_approx,
    ellipsoid_ase,
    ellipsoid_exact,
)
from .pool import DataPool, partition
from .seqcore import ProcedureConfig, ProcedureResult, run_procedures
from .shrinkage import AseConfig

__all__ = ["PoolFit", "fit_pool", "SequentialRegressor"]


@dataclass(frozen=True)
class PoolFit:
    results: List[ProcedureResult]
    estimate: CombinedEstimate
    exact: Optional[ConfidenceEllipsoid]
    approx: Optional[ConfidenceEllipsoid]
    ase: Optional[ConfidenceEllipsoid]


def fit_pool(pool: DataPool, cfg: ProcedureConfig, seed, executor: str = "sequential") -> PoolFit:
    """Partition ``pool``, run ``cfg.M`` procedures and merge them.

    ``seed`` seeds the partition draw and, through spawned child streams,
    each procedure's own generator.
    """
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    part_seed, *proc_seeds = ss.spawn(cfg.M + 1)
    resolved = cfg.resolve(pool.p)
    handles = partition(pool, cfg.M, np.random.default_rng(part_seed), n0=resolved.n0)
    rngs = [np.random.default_rng(s) for s in proc_seeds]
    results = run_procedures(handles, resolved, rngs, executor=executor)
    est = combine(results)
    if cfg.ase is not None:
        return PoolFit(results, est, None, None, ellipsoid_ase(results, cfg.d))
    return PoolFit(
        results,
        est,
        ellipsoid_exact(est, results, cfg.d),
        ellipsoid_approx(est, results, cfg.d),
        None,
    )


class SequentialRegressor(RegressorMixin, BaseEstimator):
    """Linear regression by ``n_procedures`` sequential fixed-size procedures.

    Each procedure recruits rows from its share of the training data until
    its confidence ellipsoid, with maximum axis at most ``2 * d``, is
    reached; the procedures are then merged by data-share weights. Rows
    that no procedure recruited are never used.

    Parameters
    ----------
    d : float
        Half the allowed maximum axis of the confidence ellipsoid.
    alpha : float
        Nominal miscoverage of the merged confidence set.
    n_procedures : int
        Number of procedures run side by side (``M``).
    n0 : int or None
        Initial random sample per procedure; ``None`` means ``p + 5``.
    selection : {"random", "d-optimal"}
    pool : {"partitioned", "shared"}
    ase : bool
        Enable adaptive shrinkage variable selection.
    lambda_exponent, gamma, epsilon : float
        Shrinkage tuning, see :class:`distseq.shrinkage.AseConfig`.
    fit_intercept : bool
        Prepend a column of ones before fitting.
    executor : {"sequential", "parallel"}
    max_steps : int or None
        Cap on rows per procedure.
    check_every : int
        Evaluate the stopping rule every ``check_every`` recruits.
    random_state : int, Generator or None

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
    intercept_ : float
    n_stop_ : int
        Total number of rows recruited, ``N*``.
    n_per_procedure_ : ndarray of shape (n_procedures,)
    sigma2_ : float
    support_ : ndarray of bool or None
        Coordinates kept by every procedure (ASE only).
    exhausted_ : bool
        True if some procedure ran out of rows before its criterion held.
    """

    def __init__(
        self,
        d=0.2,
        alpha=0.05,
        n_procedures=1,
        n0=None,
        selection="random",
        pool="partitioned",
        ase=False,
        lambda_exponent=0.75,
        gamma=1.0,
        epsilon=1.0,
        fit_intercept=False,
        executor="sequential",
        max_steps=None,
        check_every=1,
        random_state=None,
    ):
        self.d = d
        self.alpha = alpha
        self.n_procedures = n_procedures
        self.n0 = n0
        self.selection = selection
        self.pool = pool
        self.ase = ase
        self.lambda_exponent = lambda_exponent
        self.gamma = gamma
        self.epsilon = epsilon
        self.fit_intercept = fit_intercept
        self.executor = executor
        self.max_steps = max_steps
        self.check_every = check_every
        self.random_state = random_state

    def _design(self, X):
        if self.fit_intercept:
            return np.column_stack([np.ones(X.shape[0]), X])
        return X

    def _config(self) -> ProcedureConfig:
        ase = None
        if self.ase:
            ase = AseConfig(
                lambda_exponent=self.lambda_exponent, gamma=self.gamma, epsilon=self.epsilon
            )
        return ProcedureConfig(
            d=self.d,
            alpha=self.alpha,
            M=self.n_procedures,
            n0=self.n0,
            selection=self.selection,
            ase=ase,
            max_steps=self.max_steps,
            check_every=self.check_every,
        )

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        self.n_features_in_ = X.shape[1]
        design = self._design(X)
        cfg = self._config()
        rs = self.random_state
        if isinstance(rs, np.random.Generator):
            seed = np.random.SeedSequence(int(rs.integers(2**63)))
        elif rs is None or isinstance(rs, (int, np.integer)):
            seed = np.random.SeedSequence(rs)
        else:
            seed = np.random.SeedSequence(int(check_random_state(rs).randint(2**31 - 1)))
        fit = fit_pool(DataPool(design, y, mode=self.pool), cfg, seed, executor=self.executor)

        beta = fit.estimate.beta_hat
        if self.fit_intercept:
            self.intercept_, self.coef_ = float(beta[0]), beta[1:].copy()
        else:
            self.intercept_, self.coef_ = 0.0, beta.copy()
        self.estimate_ = fit.estimate
        self.procedure_results_ = fit.results
        self.confidence_set_ = fit.ase if self.ase else fit.exact
        self.confidence_set_approx_ = fit.approx
        self.n_stop_ = fit.estimate.N_star
        self.n_per_procedure_ = np.array([r.N for r in fit.results])
        self.sigma2_ = fit.estimate.sigma2_hat
        self.exhausted_ = fit.estimate.exhausted
        self.support_ = None
        if fit.estimate.indicator_star is not None:
            ind = fit.estimate.indicator_star.astype(bool)
            self.support_ = ind[1:] if self.fit_intercept else ind
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X @ self.coef_ + self.intercept_
