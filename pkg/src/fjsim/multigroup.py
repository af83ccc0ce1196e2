"""The (m, n, k) system: m disks split into m/n fork-join groups behind a router."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _pykernels, dists, stats
from .analytic import SystemParams
from .dists import RngStream, ServiceDist
from .simcore import ForkJoinConfig, _check_run_args, simulate

__all__ = ["MultiGroupConfig", "assign", "run_multigroup", "compare_policies", "POLICIES"]

POLICIES = {"random": _pykernels.RANDOM, "pod": _pykernels.POD, "lwl": _pykernels.LWL}
_POLICY_ALIASES = {"uniform_random": "random", "power_of_d": "pod", "least_work_left": "lwl"}
METRICS = {"jobs_in_group": _pykernels.METRIC_JOBS, "remaining_work_estimate": _pykernels.METRIC_WORK}


@dataclass(frozen=True)
class MultiGroupConfig:
    m: int
    n: int
    k: int
    lam: float
    mu: float
    policy: str = "random"
    d: Optional[int] = None
    metric: str = "jobs_in_group"
    service: Optional[ServiceDist] = None
    cancel: str = "immediate"

    def __post_init__(self):
        object.__setattr__(self, "policy", _POLICY_ALIASES.get(self.policy, self.policy))
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}")
        if self.metric not in METRICS:
            raise ValueError(f"unknown work metric {self.metric!r}")
        if self.n < 1 or self.m % self.n:
            raise ValueError(f"n={self.n} must divide m={self.m}")
        g = self.m // self.n
        if self.policy == "lwl":
            object.__setattr__(self, "d", g)
        elif self.policy == "pod":
            if self.d is None or not 1 <= self.d <= g:
                raise ValueError(f"power-of-d needs 1 <= d <= g={g}, got d={self.d}")
        else:
            object.__setattr__(self, "d", None)
        SystemParams(self.n, self.k, self.lam, self.mu)

    @property
    def groups(self) -> int:
        return self.m // self.n

    def group_config(self) -> ForkJoinConfig:
        params = SystemParams(self.n, self.k, self.lam, self.mu)
        return ForkJoinConfig(params, self.service, cancel=self.cancel)

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "n": self.n,
            "k": self.k,
            "lambda": self.lam,
            "mu": self.mu,
            "policy": self.policy,
            "d": self.d,
            "metric": self.metric,
            "service": dists.to_dict(self.group_config().service),
            "cancel": self.cancel,
        }


def assign(policy: str, work: Sequence[float], rng: Optional[RngStream] = None, d: Optional[int] = None) -> int:
    """Pick a group index given each group's current work measure.

    Power-of-d samples d distinct groups without replacement and keeps the
    least loaded candidate; ties always go to the lowest group index.
    """
    policy = _POLICY_ALIASES.get(policy, policy)
    g = len(work)
    if g < 1:
        raise ValueError("need at least one group")
    if g == 1:
        return 0
    if policy == "random":
        i = int(rng.uniform() * g)
        return min(i, g - 1)
    if policy == "pod":
        if d is None or not 1 <= d <= g:
            raise ValueError(f"power-of-d needs 1 <= d <= {g}")
        if d < g:
            perm = list(range(g))
            for i in range(d):
                j = min(i + int(rng.uniform() * (g - i)), g - 1)
                perm[i], perm[j] = perm[j], perm[i]
            return min(perm[:d], key=lambda c: (work[c], c))
    elif policy != "lwl":
        raise ValueError(f"unknown policy {policy!r}")
    return min(range(g), key=lambda c: (work[c], c))


def run_multigroup(config: MultiGroupConfig, horizon_jobs: int, warmup_jobs: Optional[int] = None,
                   seed: int = 0, stream: int = 0, backend: Optional[str] = None,
                   keep_output: bool = False) -> stats.RunResult:
    """Aggregate response-time summary of one routed run.

    ``extra["group_arrivals"]`` holds per-group arrival counts; with
    ``keep_output`` the raw :class:`SimOutput` is stored under
    ``extra["output"]``.
    """
    warmup = _check_run_args(horizon_jobs, warmup_jobs)
    fj = config.group_config()
    out = simulate(
        fj, horizon_jobs, RngStream(seed, stream),
        groups=config.groups,
        policy=POLICIES[config.policy],
        d=config.d or 1,
        metric=METRICS[config.metric],
        backend=backend,
    )
    counts = np.bincount(out.group, minlength=config.groups).tolist()
    extra = {"stream": stream, "policy": config.policy, "group_arrivals": counts}
    if keep_output:
        extra["output"] = out
    digest = stats.config_digest(config.to_dict())
    return stats.summarize(out.response[warmup:], seed=seed, digest=digest, events=out.events, extra=extra)


def _run_for_reps(config, horizon, warmup, seed, stream, backend):
    return run_multigroup(config, horizon, warmup, seed, stream, backend)


def compare_policies(base: MultiGroupConfig, policies: Sequence[tuple], horizon_jobs: int,
                     warmup_jobs: Optional[int] = None, replications: int = 1, seed: int = 0,
                     backend: Optional[str] = None) -> dict:
    """Run each (policy, d) pair on identical seeds; returns {label: RunResult}."""
    from .simcore import run_replications

    results = {}
    for policy, d in policies:
        cfg = MultiGroupConfig(base.m, base.n, base.k, base.lam, base.mu, policy, d,
                               base.metric, base.service, base.cancel)
        label = policy if policy != "pod" else f"pod{d}"
        results[label] = run_replications(cfg, horizon_jobs, warmup_jobs, replications, seed,
                                          backend=backend, runner=_run_for_reps)
    return results
