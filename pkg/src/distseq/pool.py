"""Observation store shared by the sequential procedures.

Rows are claimed without replacement: once a procedure recruits a row no
other procedure can ever see it again. A pool is either split into
disjoint partitions (one per procedure) or shared, in which case claims
are serialized by a lock.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

__all__ = [
    "Observation",
    "DataPool",
    "PoolHandle",
    "PoolSetupError",
    "partition",
    "claim_random",
    "claim_d_optimal",
]

UNCLAIMED = -1


class PoolSetupError(ValueError):
    """The pool cannot supply what a procedure needs to start."""


@dataclass(frozen=True)
class Observation:
    x: np.ndarray
    y: float
    id: int


class DataPool:
    """Indexed rows plus an append-only claim mark per row.

    Parameters
    ----------
    X : array of shape (n_rows, p)
    y : array of shape (n_rows,)
    mode : {"partitioned", "shared"}
    """

    def __init__(self, X, y, mode: str = "partitioned"):
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=float)))
        y = np.asarray(y, dtype=float).ravel()
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("pool contains non-finite values")
        if mode not in ("partitioned", "shared"):
            raise ValueError(f"unknown pool mode {mode!r}")
        self.X = X
        self.y = y
        self.mode = mode
        self.claimed = np.full(X.shape[0], UNCLAIMED, dtype=np.int64)
        self.claim_log: List[int] = []
        self._lock = threading.Lock()

    def __len__(self):
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def _mark(self, row: int, owner: int) -> bool:
        # Check-and-mark must be atomic when handles share rows.
        with self._lock:
            if self.claimed[row] != UNCLAIMED:
                return False
            self.claimed[row] = owner
            self.claim_log.append(row)
            return True

    def observation(self, row: int) -> Observation:
        return Observation(x=self.X[row], y=float(self.y[row]), id=int(row))

    def audit(self) -> None:
        """Raise if any row was handed out more than once."""
        log = np.asarray(self.claim_log, dtype=np.int64)
        if np.unique(log).size != log.size:
            raise AssertionError("a row was claimed more than once")
        if np.count_nonzero(self.claimed != UNCLAIMED) != log.size:
            raise AssertionError("claim marks and claim log disagree")

    def partition(self, M: int, rng, n0: int = 0) -> List["PoolHandle"]:
        return partition(self, M, rng, n0=n0)


class PoolHandle:
    """One procedure's view of a :class:`DataPool`."""

    def __init__(self, pool: DataPool, owner: int, rows: np.ndarray):
        self.pool = pool
        self.owner = owner
        self.rows = np.asarray(rows, dtype=np.int64)
        self._X = pool.X[self.rows]
        self._order: Optional[np.ndarray] = None
        self._cursor = 0

    def __len__(self):
        return self.rows.size

    def available(self) -> int:
        return int(np.count_nonzero(self.pool.claimed[self.rows] == UNCLAIMED))

    def claim_random(self, rng) -> Optional[Observation]:
        # A lazily drawn permutation of the visible rows, skipping rows
        # already taken by others, yields a uniform draw among unclaimed rows.
        if self._order is None:
            self._order = rng.permutation(self.rows)
        while self._cursor < self._order.size:
            row = int(self._order[self._cursor])
            self._cursor += 1
            if self.pool._mark(row, self.owner):
                return self.pool.observation(row)
        return None

    def claim_d_optimal(self, gram_inv) -> Optional[Observation]:
        gram_inv = np.asarray(gram_inv, dtype=float)
        while True:
            free = self.pool.claimed[self.rows] == UNCLAIMED
            if not free.any():
                return None
            scores = 1.0 + np.einsum("ij,ij->i", self._X @ gram_inv, self._X)
            scores[~free] = -np.inf
            best = scores.max()
            tied = self.rows[scores == best]
            row = int(tied.min())
            if self.pool._mark(row, self.owner):
                return self.pool.observation(row)


def partition(pool: DataPool, M: int, rng, n0: int = 0) -> List[PoolHandle]:
    """Split ``pool`` into ``M`` handles.

    In partitioned mode the rows are randomly permuted and cut into ``M``
    contiguous, near-equal blocks (the first ``n_rows % M`` blocks get one
    extra row). In shared mode every handle sees the whole pool.
    """
    if M < 1:
        raise ValueError(f"M must be at least 1, got {M}")
    n_rows = len(pool)
    if n_rows < M * (n0 + 1):
        raise PoolSetupError(
            f"pool of {n_rows} rows is too small for {M} procedures with n0={n0}"
        )
    if pool.mode == "shared":
        all_rows = np.arange(n_rows)
        return [PoolHandle(pool, j, all_rows) for j in range(M)]
    perm = rng.permutation(n_rows) if M > 1 else np.arange(n_rows)
    return [PoolHandle(pool, j, block) for j, block in enumerate(np.array_split(perm, M))]


def claim_random(handle: PoolHandle, rng) -> Optional[Observation]:
    """Claim a uniformly random unclaimed row; ``None`` once exhausted."""
    return handle.claim_random(rng)


def claim_d_optimal(handle: PoolHandle, gram_inv) -> Optional[Observation]:
    """Claim the row maximizing ``1 + x^T gram_inv x``; ties go to the lowest id."""
    return handle.claim_d_optimal(gram_inv)
