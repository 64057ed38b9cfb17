"""Incremental symmetric linear algebra for sequential least squares.

A :class:`GramState` carries the sufficient statistics of one procedure:
the Gram matrix ``sum x x^T``, its inverse and log-determinant (once the
matrix is invertible), the cross moment ``sum x y`` and ``sum y^2``.
New observations are absorbed with the Sherman-Morrison identity and the
matrix determinant lemma; a periodic direct refactorization bounds drift.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

__all__ = [
    "GramState",
    "RankDeficientError",
    "REFRESH_EVERY",
    "rank_one_update",
    "direct_refresh",
    "min_eig",
    "max_eig",
]

REFRESH_EVERY = 512
_SYM_TOL = 1e-8


class RankDeficientError(np.linalg.LinAlgError):
    """Raised when a Gram matrix is singular where an inverse is required."""


@dataclass(frozen=True)
class GramState:
    n: int
    p: int
    gram: np.ndarray
    xty: np.ndarray
    yty: float
    gram_inv: Optional[np.ndarray] = None
    log_det: Optional[float] = None
    since_refresh: int = 0
    refresh_every: int = REFRESH_EVERY

    @classmethod
    def empty(cls, p: int, refresh_every: int = REFRESH_EVERY) -> "GramState":
        if p < 1:
            raise ValueError(f"p must be positive, got {p}")
        return cls(
            n=0,
            p=p,
            gram=np.zeros((p, p)),
            xty=np.zeros(p),
            yty=0.0,
            refresh_every=refresh_every,
        )

    @classmethod
    def from_data(cls, X, y, refresh_every: int = REFRESH_EVERY) -> "GramState":
        """Build a state from a block of rows in one shot."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
        _check_finite(X, "X")
        _check_finite(y, "y")
        state = cls(
            n=X.shape[0],
            p=X.shape[1],
            gram=X.T @ X,
            xty=X.T @ y,
            yty=float(y @ y),
            refresh_every=refresh_every,
        )
        return _try_establish(state)

    @property
    def invertible(self) -> bool:
        return self.gram_inv is not None


def _check_finite(a, name):
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite values")


def _factorize(gram):
    # Cholesky gives both the inverse and the log-determinant.
    try:
        L = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError:
        return None
    diag = np.diag(L)
    if diag.min() <= np.sqrt(np.finfo(float).eps) * diag.max():
        return None
    log_det = 2.0 * float(np.sum(np.log(diag)))
    L_inv = np.linalg.solve(L, np.eye(gram.shape[0]))
    inv = L_inv.T @ L_inv
    return 0.5 * (inv + inv.T), log_det


def _try_establish(state: GramState) -> GramState:
    if state.n < state.p:
        return state
    fac = _factorize(state.gram)
    if fac is None:
        return state
    inv, log_det = fac
    return replace(state, gram_inv=inv, log_det=log_det, since_refresh=0)


def direct_refresh(state: GramState) -> GramState:
    """Recompute ``gram_inv`` and ``log_det`` from ``gram`` by factorization.

    Raises
    ------
    RankDeficientError
        If the Gram matrix is singular.
    """
    fac = _factorize(state.gram)
    if fac is None:
        raise RankDeficientError("Gram matrix is rank-deficient")
    inv, log_det = fac
    return replace(state, gram_inv=inv, log_det=log_det, since_refresh=0)


def rank_one_update(state: GramState, x, y: float) -> GramState:
    """Absorb one observation ``(x, y)`` and return the new state.

    When the prior state is invertible the inverse is updated by
    Sherman-Morrison and the log-determinant by ``log(1 + x^T A^{-1} x)``.
    Before that, the inverse is (re)established by factorization as soon
    as the Gram matrix reaches full rank.
    """
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != state.p:
        raise ValueError(f"x has length {x.shape[0]}, expected {state.p}")
    y = float(y)
    if not (np.all(np.isfinite(x)) and np.isfinite(y)):
        raise ValueError("observation contains non-finite values")

    gram = state.gram + np.outer(x, x)
    new = replace(
        state,
        n=state.n + 1,
        gram=gram,
        xty=state.xty + x * y,
        yty=state.yty + y * y,
    )
    if state.gram_inv is None:
        return _try_establish(replace(new, gram_inv=None, log_det=None))

    Ainv_x = state.gram_inv @ x
    denom = 1.0 + float(x @ Ainv_x)
    if not denom > 0.0 or not np.isfinite(denom):
        return direct_refresh(new)
    inv = state.gram_inv - np.outer(Ainv_x, Ainv_x) / denom
    new = replace(
        new,
        gram_inv=inv,
        log_det=state.log_det + float(np.log(denom)),
        since_refresh=state.since_refresh + 1,
    )
    if new.refresh_every and new.since_refresh >= new.refresh_every:
        return direct_refresh(new)
    return new


def _checked_symmetric(S):
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {S.shape}")
    _check_finite(S, "S")
    scale = max(1.0, float(np.max(np.abs(S))))
    if np.max(np.abs(S - S.T)) > _SYM_TOL * scale:
        raise ValueError("matrix is not symmetric")
    return S


def min_eig(S) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    S = _checked_symmetric(S)
    return float(np.linalg.eigvalsh(S)[0])


def max_eig(S) -> float:
    """Largest eigenvalue of a symmetric matrix."""
    S = _checked_symmetric(S)
    return float(np.linalg.eigvalsh(S)[-1])
