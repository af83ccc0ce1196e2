"""Download-time analysis of MDS-coded storage as (n, k) fork-join queues.

Modules
-------
dists       service-time laws and seeded random streams
analytic    order-statistic moments and response-time bounds
simcore     fork-join / split-merge discrete-event simulation
multigroup  (m, n, k) systems with request routing policies
codec       systematic MDS erasure code over GF(256)
stats       estimates, confidence intervals, ECDFs
cli         experiment runner
"""
from . import _backend
from .analytic import BoundsReport, SystemParams, Unstable
from .dists import (
    CorrelatedExpMix,
    Deterministic,
    Exponential,
    MomentUndefined,
    Pareto,
    RngStream,
)
from .simcore import ForkJoinConfig, run, run_replications, run_split_merge
from .stats import RunResult

BACKEND = _backend.NAME

__all__ = [
    "BACKEND",
    "BoundsReport",
    "CorrelatedExpMix",
    "Deterministic",
    "Exponential",
    "ForkJoinConfig",
    "MomentUndefined",
    "Pareto",
    "RngStream",
    "RunResult",
    "SystemParams",
    "Unstable",
    "run",
    "run_replications",
    "run_split_merge",
]

__version__ = "0.1.0"
