"""Merging stopped procedures into one estimate and confidence ellipsoid.

The combined estimate weights each procedure by its share of the data,
``rho_j = N_j / N*``. Three confidence sets are available:

* exact: shape ``(sum rho_j^2 G_j^{-1})^{-1}``, radius ``N* d^2 / mu*``;
* approximate: shape ``sum G_j`` with the same radius (cheaper for large p);
* ASE: restricted to the coordinates every procedure kept, using the Schur
  complement of the pooled Gram matrix on the active block.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .seqcore import ProcedureResult

log = logging.getLogger(__name__)

__all__ = [
    "CombinedEstimate",
    "ConfidenceEllipsoid",
    "combine",
    "ellipsoid_exact",
    "ellipsoid_approx",
    "ellipsoid_ase",
    "contains",
    "max_axis",
]


@dataclass(frozen=True)
class CombinedEstimate:
    beta_hat: np.ndarray
    N_star: int
    rho: np.ndarray
    mu_star: float
    sigma2_hat: float
    exhausted: bool = False
    indicator_star: Optional[np.ndarray] = None

    @property
    def p0_hat(self) -> Optional[int]:
        if self.indicator_star is None:
            return None
        return int(self.indicator_star.sum())


@dataclass(frozen=True)
class ConfidenceEllipsoid:
    """The set ``{z : (z - center)^T shape (z - center) <= radius}``.

    When ``zero_pattern`` is given, members must also vanish on those
    coordinates and ``shape`` acts on the remaining ones only.
    """

    center: np.ndarray
    shape: np.ndarray
    radius: float
    zero_pattern: Optional[np.ndarray] = None
    degenerate: bool = False

    @property
    def active(self) -> np.ndarray:
        p = self.center.shape[0]
        if self.zero_pattern is None:
            return np.arange(p)
        return np.setdiff1d(np.arange(p), self.zero_pattern)

    def quad_form(self, z) -> float:
        diff = (np.asarray(z, dtype=float) - self.center)[self.active]
        Q = self.shape_active
        return float(diff @ Q @ diff)

    @property
    def shape_active(self) -> np.ndarray:
        if self.zero_pattern is None:
            return self.shape
        a = self.active
        return self.shape[np.ix_(a, a)]


def _check_results(results: Sequence[ProcedureResult]):
    if len(results) == 0:
        raise ValueError("no procedure results to combine")
    p = results[0].p
    if any(r.p != p for r in results):
        raise ValueError("procedure results have different dimensions")


def combine(results: Sequence[ProcedureResult]) -> CombinedEstimate:
    """Weighted average ``sum rho_j beta_j`` with ``rho_j = N_j / N*``.

    In ASE mode the combined indicator is the elementwise product of the
    procedure indicators and the estimate is zeroed outside it.
    """
    _check_results(results)
    N = np.array([r.N for r in results], dtype=float)
    N_star = int(N.sum())
    rho = N / N_star
    betas = np.stack([r.beta_hat for r in results])
    beta = rho @ betas
    mu_star = float(rho @ np.array([r.mu for r in results]))
    sigma2 = float(rho @ np.array([r.sigma2_hat for r in results]))
    exhausted = not all(r.stopped_naturally for r in results)
    if exhausted:
        log.warning("at least one procedure exhausted its pool; coverage is not guaranteed")
    indicator = None
    if all(r.indicator is not None for r in results):
        indicator = np.prod(np.stack([r.indicator for r in results]), axis=0).astype(np.int8)
        beta = np.where(indicator == 1, beta, 0.0)
    return CombinedEstimate(
        beta_hat=beta,
        N_star=N_star,
        rho=rho,
        mu_star=mu_star,
        sigma2_hat=sigma2,
        exhausted=exhausted,
        indicator_star=indicator,
    )


def _sym_inv(A):
    inv = np.linalg.inv(A)
    return 0.5 * (inv + inv.T)


def ellipsoid_exact(est: CombinedEstimate, results: Sequence[ProcedureResult], d: float) -> ConfidenceEllipsoid:
    """Set built from the covariance ``sum rho_j^2 G_j^{-1}`` of the combined estimate."""
    _check_results(results)
    if len(results) == 1:
        shape = results[0].gram.copy()
    else:
        cov = sum(r**2 * res.gram_inv for r, res in zip(est.rho, results))
        shape = _sym_inv(cov)
    beta = _unrestricted_beta(est, results)
    return ConfidenceEllipsoid(center=beta, shape=shape, radius=est.N_star * d**2 / est.mu_star)


def ellipsoid_approx(est: CombinedEstimate, results: Sequence[ProcedureResult], d: float) -> ConfidenceEllipsoid:
    """Set built from the pooled Gram matrix ``sum G_j``."""
    _check_results(results)
    shape = sum(res.gram for res in results)
    beta = _unrestricted_beta(est, results)
    return ConfidenceEllipsoid(center=beta, shape=shape, radius=est.N_star * d**2 / est.mu_star)


def _unrestricted_beta(est, results):
    if est.indicator_star is None:
        return est.beta_hat
    return est.rho @ np.stack([r.beta_hat for r in results])


def ellipsoid_ase(results: Sequence[ProcedureResult], d: float) -> ConfidenceEllipsoid:
    """Confidence set on the coordinates selected by every procedure.

    With ``G = sum_j G_j`` split into active (1) and inactive (2) blocks the
    shape on the active block is ``G11 - G12 G22^{-1} G21``, which equals
    ``((G^{-1})_{11})^{-1}``. The radius is ``N~ d^2 / nu`` with
    ``nu = lambda_max(N~ (G^{-1})_{11})``.
    """
    _check_results(results)
    if any(r.indicator is None for r in results):
        raise ValueError("every procedure result must carry an indicator")
    est = combine(results)
    indicator = est.indicator_star
    p = indicator.shape[0]
    active = np.flatnonzero(indicator)
    inactive = np.flatnonzero(indicator == 0)
    G = sum(res.gram for res in results)
    shape = np.zeros((p, p))
    if active.size == 0:
        log.warning("no coordinate survived in every procedure; the set is a single point")
        return ConfidenceEllipsoid(
            center=est.beta_hat, shape=shape, radius=0.0, zero_pattern=inactive, degenerate=True
        )
    G11 = G[np.ix_(active, active)]
    if inactive.size:
        G12 = G[np.ix_(active, inactive)]
        G22 = G[np.ix_(inactive, inactive)]
        try:
            G22_inv = _sym_inv(G22)
        except np.linalg.LinAlgError:
            warnings.warn("inactive block is singular; using a pseudo-inverse", RuntimeWarning)
            G22_inv = np.linalg.pinv(G22)
        schur = G11 - G12 @ G22_inv @ G12.T
    else:
        schur = G11
    schur = 0.5 * (schur + schur.T)
    shape[np.ix_(active, active)] = schur
    G_inv_11 = _sym_inv(schur)
    nu = est.N_star * float(np.linalg.eigvalsh(G_inv_11)[-1])
    return ConfidenceEllipsoid(
        center=est.beta_hat,
        shape=shape,
        radius=est.N_star * d**2 / nu,
        zero_pattern=inactive,
    )


def contains(ellipsoid: ConfidenceEllipsoid, z) -> bool:
    """Membership test, including the zero pattern of ASE sets."""
    z = np.asarray(z, dtype=float)
    if z.shape != ellipsoid.center.shape:
        raise ValueError(f"z has shape {z.shape}, expected {ellipsoid.center.shape}")
    if ellipsoid.zero_pattern is not None and np.any(z[ellipsoid.zero_pattern] != 0.0):
        return False
    if ellipsoid.degenerate:
        return bool(np.array_equal(z, ellipsoid.center))
    return ellipsoid.quad_form(z) <= ellipsoid.radius


def max_axis(ellipsoid: ConfidenceEllipsoid) -> float:
    """Full length of the longest axis, ``2 sqrt(radius * lambda_max(shape^{-1}))``."""
    if ellipsoid.degenerate or ellipsoid.active.size == 0:
        return 0.0
    lam_min = float(np.linalg.eigvalsh(ellipsoid.shape_active)[0])
    if lam_min <= 0:
        return float("inf")
    return 2.0 * np.sqrt(ellipsoid.radius / lam_min)
