"""One sequential fixed-size confidence-set procedure.

A procedure starts from ``n0`` randomly recruited rows and keeps recruiting
(randomly or by D-optimality) until

    sigma2_hat + 1/n <= d^2 n / (a~^2 mu_n),    mu_n = lambda_max(n G^{-1}),

where ``G`` is the procedure's Gram matrix. ``mu_n`` is taken as the largest
eigenvalue of ``n G^{-1}``; with that choice the ellipsoid
``(z - b)^T G (z - b) <= n d^2 / mu_n`` has maximum axis exactly ``2d``.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .linalg import GramState, RankDeficientError, rank_one_update
from .pool import PoolHandle, PoolSetupError
from .shrinkage import AseConfig, AseState, chi2_quantile, shrink, should_stop_ase

log = logging.getLogger(__name__)

__all__ = [
    "ProcedureConfig",
    "ProcedureResult",
    "SequentialProcedure",
    "beta_hat",
    "sigma2_hat",
    "mu_n",
    "should_stop",
    "run_procedure",
    "run_procedures",
]


@dataclass(frozen=True)
class ProcedureConfig:
    """Settings shared by the ``M`` procedures of one fit.

    ``a_tilde_sq`` defaults to the even split ``chi2_p(1 - alpha) / M``;
    ``n0`` defaults to ``p + 5``.
    """

    d: float
    alpha: float = 0.05
    M: int = 1
    a_tilde_sq: Optional[float] = None
    n0: Optional[int] = None
    selection: str = "random"
    ase: Optional[AseConfig] = None
    max_steps: Optional[int] = None
    check_every: int = 1

    def __post_init__(self):
        if not self.d > 0:
            raise ValueError(f"d must be positive, got {self.d}")
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.M < 1:
            raise ValueError(f"M must be at least 1, got {self.M}")
        if self.selection not in ("random", "d-optimal"):
            raise ValueError(f"unknown selection {self.selection!r}")
        if self.check_every < 1:
            raise ValueError("check_every must be at least 1")

    def resolve(self, p: int) -> "ResolvedConfig":
        n0 = p + 5 if self.n0 is None else int(self.n0)
        if n0 < p + 2:
            raise ValueError(f"n0={n0} must be at least p + 2 = {p + 2}")
        a2 = self.a_tilde_sq
        if a2 is None:
            a2 = chi2_quantile(p, 1.0 - self.alpha) / self.M
        return ResolvedConfig(
            d=self.d,
            alpha=self.alpha,
            M=self.M,
            a_tilde_sq=float(a2),
            n0=n0,
            selection=self.selection,
            ase=self.ase,
            max_steps=self.max_steps,
            check_every=self.check_every,
        )


@dataclass(frozen=True)
class ResolvedConfig:
    d: float
    alpha: float
    M: int
    a_tilde_sq: float
    n0: int
    selection: str
    ase: Optional[AseConfig]
    max_steps: Optional[int]
    check_every: int


@dataclass(frozen=True)
class ProcedureResult:
    N: int
    beta_hat: np.ndarray
    sigma2_hat: float
    gram: np.ndarray
    gram_inv: np.ndarray
    mu: float
    stopped_naturally: bool
    indicator: Optional[np.ndarray] = None
    elapsed: float = 0.0
    row_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def p(self) -> int:
        return self.beta_hat.shape[0]


def _require_inverse(state: GramState):
    if state.gram_inv is None:
        raise RankDeficientError("Gram matrix is not invertible yet")
    return state.gram_inv


def beta_hat(state: GramState) -> np.ndarray:
    """Least-squares estimate ``G^{-1} X^T y``."""
    return _require_inverse(state) @ state.xty


def sigma2_hat(state: GramState) -> float:
    """Residual variance ``RSS / (n - p)``."""
    if state.n <= state.p:
        raise ValueError(f"variance undefined for n={state.n} <= p={state.p}")
    b = beta_hat(state)
    rss = state.yty - float(b @ state.xty)
    return max(rss, 0.0) / (state.n - state.p)


def mu_n(state: GramState) -> float:
    """``lambda_max(n G^{-1})``, i.e. ``1 / lambda_min(G / n)``."""
    inv = _require_inverse(state)
    return state.n * float(np.linalg.eigvalsh(inv)[-1])


def should_stop(state: GramState, cfg) -> bool:
    """Non-ASE stopping check; ``cfg`` must carry ``d``, ``n0`` and ``a_tilde_sq``."""
    n = state.n
    if n < cfg.n0 or state.gram_inv is None or n <= state.p:
        return False
    lhs = sigma2_hat(state) + 1.0 / n
    scale = cfg.d**2 / cfg.a_tilde_sq
    # max diag(G^{-1}) <= lambda_max(G^{-1}): a cheap bound that can only
    # rule stopping out, never in.
    if lhs > scale / float(np.max(np.diag(state.gram_inv))):
        return False
    return lhs <= scale * n / mu_n(state)


class SequentialProcedure:
    """Step-wise driver of one procedure over a pool handle."""

    def __init__(self, handle: PoolHandle, cfg: ProcedureConfig, rng):
        self.handle = handle
        self.p = handle.pool.p
        self.cfg = cfg.resolve(self.p) if isinstance(cfg, ProcedureConfig) else cfg
        self.rng = rng
        self.state = GramState.empty(self.p)
        self.ids: List[int] = []
        self.done = False
        self.stopped_naturally = False
        self.ase_state: Optional[AseState] = None
        self._since_check = 0
        self.elapsed = 0.0

    def _absorb(self, obs):
        self.state = rank_one_update(self.state, obs.x, obs.y)
        self.ids.append(obs.id)

    def start(self):
        t0 = time.perf_counter()
        n0 = self.cfg.n0
        if self.handle.available() < n0:
            raise PoolSetupError(
                f"procedure {self.handle.owner}: need {n0} rows, "
                f"{self.handle.available()} available"
            )
        for _ in range(n0):
            obs = self.handle.claim_random(self.rng)
            if obs is None:
                raise PoolSetupError("pool exhausted during initial recruitment")
            self._absorb(obs)
        self._check()
        self.elapsed += time.perf_counter() - t0
        return self

    def _check(self):
        if self._since_check % self.cfg.check_every:
            return
        if self.cfg.ase is not None:
            if self.state.gram_inv is None or self.state.n <= self.p:
                return
            self.ase_state = shrink(beta_hat(self.state), self.state.n, self.cfg.ase)
            stop = should_stop_ase(self.state, self.ase_state, self.cfg)
        else:
            stop = should_stop(self.state, self.cfg)
        if stop:
            self.done = True
            self.stopped_naturally = True

    def step(self) -> bool:
        """Recruit one observation and re-check; returns ``True`` once finished."""
        if self.done:
            return True
        t0 = time.perf_counter()
        try:
            return self._step()
        finally:
            self.elapsed += time.perf_counter() - t0

    def _step(self) -> bool:
        cap = self.cfg.max_steps
        if cap is not None and self.state.n >= cap:
            self.done = True
            return True
        if self.cfg.selection == "d-optimal" and self.state.gram_inv is not None:
            obs = self.handle.claim_d_optimal(self.state.gram_inv)
        else:
            obs = self.handle.claim_random(self.rng)
        if obs is None:
            self.done = True
            return True
        self._absorb(obs)
        self._since_check += 1
        self._check()
        return self.done

    def run(self) -> "ProcedureResult":
        while not self.step():
            pass
        return self.result()

    def result(self) -> ProcedureResult:
        state = self.state
        if not self.stopped_naturally:
            log.warning(
                "procedure %d stopped at n=%d without meeting its criterion",
                self.handle.owner,
                state.n,
            )
        b = beta_hat(state)
        indicator = None
        if self.cfg.ase is not None:
            ase = shrink(b, state.n, self.cfg.ase)
            indicator = ase.indicator
        return ProcedureResult(
            N=state.n,
            beta_hat=b,
            sigma2_hat=sigma2_hat(state),
            gram=state.gram.copy(),
            gram_inv=state.gram_inv.copy(),
            mu=mu_n(state),
            stopped_naturally=self.stopped_naturally,
            indicator=indicator,
            elapsed=self.elapsed,
            row_ids=np.asarray(self.ids, dtype=np.int64),
        )


def run_procedure(handle: PoolHandle, cfg: ProcedureConfig, rng) -> ProcedureResult:
    """Run one procedure to its stopping time (or pool exhaustion)."""
    return SequentialProcedure(handle, cfg, rng).start().run()


def run_procedures(
    handles: Sequence[PoolHandle],
    cfg: ProcedureConfig,
    rngs: Sequence,
    executor: str = "sequential",
) -> List[ProcedureResult]:
    """Run one procedure per handle.

    ``"sequential"`` advances the procedures round-robin, one recruit at a
    time, so runs over a shared pool replay exactly. ``"parallel"`` runs each
    procedure to completion on its own thread.
    """
    if len(handles) != len(rngs):
        raise ValueError("need one generator per handle")
    procs = [SequentialProcedure(h, cfg, r) for h, r in zip(handles, rngs)]
    if executor == "sequential":
        for proc in procs:
            proc.start()
        active = [proc for proc in procs if not proc.done]
        while active:
            active = [proc for proc in active if not proc.step()]
        return [proc.result() for proc in procs]
    if executor == "parallel":
        with ThreadPoolExecutor(max_workers=len(procs)) as pool:
            futures = [pool.submit(lambda pr: pr.start().run(), proc) for proc in procs]
            return [f.result() for f in futures]
    raise ValueError(f"unknown executor {executor!r}")
