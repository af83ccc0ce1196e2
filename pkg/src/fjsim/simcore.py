"""Discrete-event simulation of (n, k) fork-join and split-merge systems.

Every arrival forks one task to each of the n FCFS disk queues and the
job leaves at its k-th task completion.  Under immediate cancellation
the sibling tasks still queued or in service are withdrawn at that
moment; a preempted server picks up its next task at once.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _backend, dists, stats
from .analytic import SystemParams, exp_orderstat_mean
from .dists import CorrelatedExpMix, Exponential, RngStream, ServiceDist

__all__ = [
    "ForkJoinConfig",
    "Job",
    "SimOutput",
    "run",
    "run_split_merge",
    "run_replications",
    "simulate",
    "sample_correlated_services",
    "default_warmup",
    "write_trace",
]

CANCEL_MODES = ("immediate", "none")
MODES = ("fork_join", "split_merge")


@dataclass(frozen=True)
class ForkJoinConfig:
    params: SystemParams
    service: Optional[ServiceDist] = None
    delta: float = 0.0
    cancel: str = "immediate"
    mode: str = "fork_join"

    def __post_init__(self):
        if self.service is None:
            if self.delta:
                svc = CorrelatedExpMix(self.params.mu_prime, self.delta)
            else:
                svc = Exponential(self.params.mu_prime)
            object.__setattr__(self, "service", svc)
        if self.cancel not in CANCEL_MODES:
            raise ValueError(f"cancel must be one of {CANCEL_MODES}, got {self.cancel!r}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if isinstance(self.service, CorrelatedExpMix):
            if self.service.delta != self.delta:
                raise ValueError("config delta must equal the correlated service delta")
        elif self.delta != 0:
            raise ValueError("delta is only meaningful with CorrelatedExpMix service")

    def to_dict(self) -> dict:
        p = self.params
        return {
            "n": p.n,
            "k": p.k,
            "lambda": p.lam,
            "mu": p.mu,
            "service": dists.to_dict(self.service),
            "delta": self.delta,
            "cancel": self.cancel,
            "mode": self.mode,
        }

    def digest(self) -> str:
        return stats.config_digest(self.to_dict())


@dataclass
class Job:
    """Per-job record kept by traced pure-Python runs."""

    id: int
    arrival: float
    finishes: list = field(default_factory=list)
    starts: list = field(default_factory=list)
    join: Optional[float] = None

    @property
    def response(self) -> Optional[float]:
        return None if self.join is None else self.join - self.arrival


@dataclass
class SimOutput:
    arrival: np.ndarray
    join: np.ndarray
    group: Optional[np.ndarray]
    finish0: Optional[np.ndarray]
    events: dict
    jobs: Optional[list] = None

    @property
    def response(self) -> np.ndarray:
        return self.join - self.arrival


def default_warmup(horizon: int) -> int:
    """1% of the horizon, at least 1000 jobs, never more than half the run."""
    return min(max(1000, horizon // 100), horizon // 2)


def _check_run_args(horizon, warmup):
    if warmup is None:
        warmup = default_warmup(horizon)
    if warmup < 0 or horizon <= warmup:
        raise ValueError(f"need horizon > warmup >= 0, got horizon={horizon}, warmup={warmup}")
    return warmup


def _task_mean(service):
    try:
        return dists.mean(service)
    except dists.MomentUndefined:
        return service.xm


def simulate(config: ForkJoinConfig, horizon: int, rng: RngStream, *, groups: int = 1,
             policy: int = 0, d: int = 1, metric: int = 0, backend: Optional[str] = None,
             trace: bool = False) -> SimOutput:
    """Run one kernel pass and return raw per-job arrays.

    ``trace`` forces the pure-Python kernel and collects per-task
    start/finish times on :class:`Job` records.
    """
    p = config.params
    code, p1, p2 = dists.kernel_code(config.service)
    if config.mode == "split_merge":
        mod = _backend.get("python" if trace else backend)
        out = mod.split_merge(p.n, p.k, p.lam, code, p1, p2, horizon, rng.bit_generator)
        return SimOutput(out["arrival"], out["join"], None, None, {"events": out["events"]})

    record = {} if trace else None
    mod = _backend.get("python" if trace else backend)
    out = mod.fork_join(
        p.n, p.k, groups, p.lam, code, p1, p2, config.cancel == "immediate",
        policy, d, metric, _task_mean(config.service), horizon, rng.bit_generator, record,
    )
    jobs = None
    if trace:
        jobs = []
        for j in range(horizon):
            join = out["join"][j]
            jobs.append(Job(
                id=j,
                arrival=float(out["arrival"][j]),
                finishes=record["finishes"].get(j, []),
                starts=record["starts"].get(j, []),
                join=None if math.isnan(join) else float(join),
            ))
    return SimOutput(
        out["arrival"], out["join"], out["group"], out["finish0"],
        {"events": out["events"], "preemptions": out["preemptions"]}, jobs,
    )


def _diagnostics(config: ForkJoinConfig) -> dict:
    p = config.params
    diag = {"rho_task": p.lam / p.mu_prime}
    if isinstance(config.service, Exponential):
        diag["rho_split_merge"] = p.lam * exp_orderstat_mean(p.n, p.k, config.service.rate)
    return diag


def _result(config, out, warmup, seed, stream, extra=None):
    resp = out.response[warmup:]
    ext = dict(_diagnostics(config), stream=stream)
    ext.update(extra or {})
    return stats.summarize(resp, seed=seed, digest=config.digest(), events=out.events, extra=ext)


def run(config: ForkJoinConfig, horizon_jobs: int, warmup_jobs: Optional[int] = None,
        seed: int = 0, stream: int = 0, backend: Optional[str] = None) -> stats.RunResult:
    """Simulate ``config`` for ``horizon_jobs`` arrivals and summarise post-warmup responses."""
    if config.mode == "split_merge":
        return run_split_merge(config, horizon_jobs, warmup_jobs, seed, stream, backend)
    warmup = _check_run_args(horizon_jobs, warmup_jobs)
    p = config.params
    if p.lam >= p.mu_prime:
        warnings.warn(
            f"arrival rate {p.lam} >= per-disk rate {p.mu_prime}; the system may be unstable",
            RuntimeWarning,
        )
    out = simulate(config, horizon_jobs, RngStream(seed, stream), backend=backend)
    return _result(config, out, warmup, seed, stream)


def run_split_merge(config: ForkJoinConfig, horizon_jobs: int, warmup_jobs: Optional[int] = None,
                    seed: int = 0, stream: int = 0, backend: Optional[str] = None) -> stats.RunResult:
    warmup = _check_run_args(horizon_jobs, warmup_jobs)
    if config.mode != "split_merge":
        config = ForkJoinConfig(config.params, config.service, config.delta, config.cancel, "split_merge")
    out = simulate(config, horizon_jobs, RngStream(seed, stream), backend=backend)
    return _result(config, out, warmup, seed, stream)


def _one_replication(args):
    fn, config, horizon, warmup, seed, stream, backend = args
    return fn(config, horizon, warmup, seed, stream, backend)


def run_replications(config: ForkJoinConfig, horizon_jobs: int, warmup_jobs: Optional[int] = None,
                     replications: int = 5, seed: int = 0, workers: int = 1,
                     backend: Optional[str] = None, runner=None) -> stats.RunResult:
    """Independent replications on stream ids 0..R-1, merged in stream order."""
    if replications < 1:
        raise ValueError("need at least one replication")
    fn = runner or run
    tasks = [(fn, config, horizon_jobs, warmup_jobs, seed, s, backend) for s in range(replications)]
    if workers > 1 and replications > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one_replication, tasks))
    else:
        results = [_one_replication(t) for t in tasks]
    return stats.merge(results)


def sample_correlated_services(rate: float, delta: float, n: int, rng: RngStream) -> np.ndarray:
    """One job's n task times: a shared exponential draw mixed with private ones."""
    if not 0.0 <= delta <= 1.0:
        raise ValueError("delta must lie in [0, 1]")
    if n < 1:
        raise ValueError("n must be positive")
    shared = -math.log(1.0 - rng.uniform()) / rate
    own = -np.log1p(-rng.uniforms(n)) / rate
    return delta * shared + (1.0 - delta) * own


def write_trace(path, out: SimOutput, k: int) -> None:
    """Per-job CSV: job_id, arrival, join, response, tasks_completed_at_join."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["job_id", "arrival", "join", "response", "tasks_completed_at_join"])
        for j, (a, jn) in enumerate(zip(out.arrival.tolist(), out.join.tolist())):
            w.writerow([j, repr(a), repr(jn), repr(jn - a), k])
