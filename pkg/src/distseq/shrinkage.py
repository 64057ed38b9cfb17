"""Adaptive shrinkage estimation (ASE) for sequential procedures.

Each coordinate of the least-squares estimate receives a penalty
``lambda(n) * |beta_k|^(-gamma)`` with ``lambda(n) = n^(-c)``. A coordinate
is kept when ``sqrt(n)`` times its penalty is below the cut ``epsilon``;
kept coordinates determine the effective dimension used by the ASE
stopping rule.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import stats

__all__ = [
    "AseConfig",
    "AseState",
    "shrink",
    "chi2_quantile",
    "ase_threshold",
    "should_stop_ase",
]


@dataclass(frozen=True)
class AseConfig:
    """Tuning of the shrinkage indicator.

    Parameters
    ----------
    lambda_exponent : float
        ``c`` in ``lambda(n) = n^(-c)``; must lie in (1/2, 1).
    gamma : float
        Power applied to ``|beta_k|`` in the penalty.
    epsilon : float
        Cutting parameter.
    delta_note : float
        Documentation only. Any ``delta < 1/2`` with ``gamma * delta > c - 1/2``
        makes ``n^(1/2 + gamma*delta) lambda(n)`` diverge.
    """

    lambda_exponent: float = 0.75
    gamma: float = 1.0
    epsilon: float = 1.0
    delta_note: float = 0.4

    def __post_init__(self):
        if not 0.5 < self.lambda_exponent < 1.0:
            raise ValueError(
                f"lambda_exponent must be in (1/2, 1), got {self.lambda_exponent}"
            )
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


@dataclass(frozen=True)
class AseState:
    indicator: np.ndarray
    beta_star: np.ndarray

    @property
    def p0_hat(self) -> int:
        return int(self.indicator.sum())

    @property
    def active(self) -> np.ndarray:
        return np.flatnonzero(self.indicator)


def ase_threshold(n: int, cfg: AseConfig) -> float:
    """Smallest ``|beta_k|`` that survives at sample size ``n`` (exclusive)."""
    return (n ** (0.5 - cfg.lambda_exponent) / cfg.epsilon) ** (1.0 / cfg.gamma)


def shrink(beta_hat, n: int, cfg: AseConfig = AseConfig()) -> AseState:
    """Zero the coordinates whose scaled penalty reaches ``epsilon``.

    ``indicator[k] = 1`` iff ``sqrt(n) * n^(-c) * |beta_k|^(-gamma) < epsilon``.
    An exact zero carries an infinite penalty and is always dropped.
    """
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    beta_hat = np.asarray(beta_hat, dtype=float)
    absb = np.abs(beta_hat)
    with np.errstate(divide="ignore", over="ignore"):
        scaled = np.sqrt(n) * float(n) ** (-cfg.lambda_exponent) * absb ** (-cfg.gamma)
    indicator = ((absb > 0) & (scaled < cfg.epsilon)).astype(np.int8)
    return AseState(indicator=indicator, beta_star=np.where(indicator == 1, beta_hat, 0.0))


@lru_cache(maxsize=4096)
def _chi2_ppf(dof: int, prob: float) -> float:
    return float(stats.chi2.ppf(prob, dof))


def chi2_quantile(dof: int, prob: float) -> float:
    """Inverse CDF of the chi-square distribution with ``dof`` degrees of freedom."""
    if int(dof) != dof or dof < 1:
        raise ValueError(f"dof must be a positive integer, got {dof}")
    if not 0.0 < prob < 1.0:
        raise ValueError(f"prob must be in (0, 1), got {prob}")
    return _chi2_ppf(int(dof), float(prob))


def should_stop_ase(state, ase: AseState, cfg) -> bool:
    """ASE stopping check for one procedure.

    Uses ``a~^2 = chi2_{p0_hat}(1 - alpha) / M`` and
    ``mu~ = lambda_max(n * I G^{-1} I)``; never stops while ``p0_hat = 0``.
    """
    from .seqcore import sigma2_hat

    n = state.n
    if n < cfg.n0 or state.gram_inv is None or n <= state.p:
        return False
    active = ase.active
    if active.size == 0:
        return False
    a2 = chi2_quantile(active.size, 1.0 - cfg.alpha) / cfg.M
    sub = state.gram_inv[np.ix_(active, active)]
    mu = n * float(np.linalg.eigvalsh(sub)[-1])
    return sigma2_hat(state) + 1.0 / n <= cfg.d**2 * n / (a2 * mu)
