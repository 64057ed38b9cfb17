"""Distributed sequential fixed-size confidence sets for linear regression."""

from .aggregate import (
    CombinedEstimate,
    ConfidenceEllipsoid,
    combine,
    contains,
    ellipsoid_approx,
    ellipsoid_ase,
    ellipsoid_exact,
    max_axis,
)
from .estimator import PoolFit, SequentialRegressor, fit_pool
from .linalg import GramState, RankDeficientError, direct_refresh, rank_one_update
from .pool import DataPool, PoolHandle, PoolSetupError, partition
from .seqcore import ProcedureConfig, ProcedureResult, SequentialProcedure, run_procedure, run_procedures
from .shrinkage import AseConfig, AseState, shrink

__version__ = "0.1.0"

__all__ = [
    "AseConfig",
    "AseState",
    "CombinedEstimate",
    "ConfidenceEllipsoid",
    "DataPool",
    "GramState",
    "PoolFit",
    "PoolHandle",
    "PoolSetupError",
    "ProcedureConfig",
    "ProcedureResult",
    "RankDeficientError",
    "SequentialProcedure",
    "SequentialRegressor",
    "combine",
    "contains",
    "direct_refresh",
    "ellipsoid_approx",
    "ellipsoid_ase",
    "ellipsoid_exact",
    "fit_pool",
    "max_axis",
    "partition",
    "rank_one_update",
    "run_procedure",
    "run_procedures",
    "shrink",
]
