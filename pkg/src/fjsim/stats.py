"""Point estimates, confidence intervals and empirical CDFs of response times."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

__all__ = ["RunResult", "summarize", "merge", "ecdf_at", "config_digest", "Z95", "SKETCH_POINTS", "EXACT_LIMIT"]

Z95 = 1.96
EXACT_LIMIT = 1_000_000
SKETCH_POINTS = 4096
QUANTILES = (0.5, 0.9, 0.99)


def config_digest(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class RunResult:
    """Summary of one run or of merged replications.

    ``ecdf_t``/``ecdf_p`` hold either every sorted sample with its
    cumulative probability, or a fixed quantile sketch once the sample
    count exceeds ``EXACT_LIMIT`` (flagged by ``ecdf_exact``).
    """

    count: int
    mean: float
    variance: float
    ci95: float
    ecdf_t: np.ndarray
    ecdf_p: np.ndarray
    ecdf_exact: bool
    quantiles: dict
    seed: Optional[int] = None
    digest: Optional[str] = None
    replications: int = 1
    replication_means: tuple = ()
    events: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def p50(self):
        return self.quantiles[0.5]

    @property
    def p90(self):
        return self.quantiles[0.9]

    @property
    def p99(self):
        return self.quantiles[0.99]

    def ecdf_at(self, t: float) -> float:
        return ecdf_at(self, t)

    def to_dict(self) -> dict:
        return {
            "samples": self.count,
            "mean": self.mean,
            "variance": self.variance,
            "ci95": self.ci95,
            "p50": self.p50,
            "p90": self.p90,
            "p99": self.p99,
            "seed": self.seed,
            "digest": self.digest,
            "replications": self.replications,
            "replication_means": list(self.replication_means),
            "events": dict(self.events),
            "extra": dict(self.extra),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def ecdf_rows(self):
        return zip(self.ecdf_t.tolist(), self.ecdf_p.tolist())


def _sketch_from_sorted(xs: np.ndarray):
    probs = np.linspace(0.0, 1.0, SKETCH_POINTS)
    return np.quantile(xs, probs), probs


def _ecdf_from_sorted(xs: np.ndarray):
    if len(xs) <= EXACT_LIMIT:
        return xs, np.arange(1, len(xs) + 1) / len(xs), True
    t, p = _sketch_from_sorted(xs)
    return t, p, False


def summarize(samples: Sequence[float], seed=None, digest=None, events=None, extra=None) -> RunResult:
    xs = np.asarray(samples, dtype=float)
    if xs.ndim != 1 or len(xs) < 2:
        raise ValueError("need at least two samples")
    xs = np.sort(xs)
    n = len(xs)
    mean = float(xs.mean())
    var = float(xs.var(ddof=1))
    t, p, exact = _ecdf_from_sorted(xs)
    qs = {q: float(np.quantile(xs, q)) for q in QUANTILES}
    return RunResult(
        count=n,
        mean=mean,
        variance=var,
        ci95=Z95 * math.sqrt(var / n),
        ecdf_t=t,
        ecdf_p=p,
        ecdf_exact=exact,
        quantiles=qs,
        seed=seed,
        digest=digest,
        replication_means=(mean,),
        events=dict(events or {}),
        extra=dict(extra or {}),
    )


def _ecdf_many(result: RunResult, ts: np.ndarray) -> np.ndarray:
    ts = np.asarray(ts, dtype=float)
    if result.ecdf_exact:
        i = np.searchsorted(result.ecdf_t, ts, side="right")
        return np.where(i > 0, result.ecdf_p[np.maximum(i - 1, 0)], 0.0)
    out = np.interp(ts, result.ecdf_t, result.ecdf_p, left=0.0, right=1.0)
    return np.where(ts >= result.ecdf_t[-1], 1.0, out)


def ecdf_at(result: RunResult, t: float) -> float:
    """Fraction of samples at or below ``t``."""
    return float(_ecdf_many(result, np.array([t]))[0])


def _mixture_quantiles(results, probs):
    # invert the count-weighted mixture of the replication ECDFs
    grid = np.unique(np.concatenate([r.ecdf_t for r in results]))
    total = sum(r.count for r in results)
    mix = sum(r.count * _ecdf_many(r, grid) for r in results) / total
    return np.interp(probs, mix, grid)


def merge(replications: Sequence[RunResult]) -> RunResult:
    """Combine independent replications of one configuration.

    The CI treats replication means as i.i.d. observations, which is
    robust to within-run autocorrelation of queueing samples.
    """
    reps = list(replications)
    if not reps:
        raise ValueError("nothing to merge")
    digests = {r.digest for r in reps}
    if len(digests) > 1:
        raise ValueError(f"cannot merge results from different configs: {sorted(map(str, digests))}")
    if len(reps) == 1:
        return reps[0]
    counts = np.array([r.count for r in reps], dtype=float)
    means = np.array([r.mean for r in reps])
    total = counts.sum()
    mean = float((counts * means).sum() / total)
    # pooled sample variance from per-run (count, mean, variance)
    ss = ((counts - 1) * np.array([r.variance for r in reps])).sum() + (counts * (means - mean) ** 2).sum()
    var = float(ss / (total - 1))
    rep_means = tuple(m for r in reps for m in r.replication_means)
    between = float(np.var(means, ddof=1))
    ci = Z95 * math.sqrt(between / len(reps))

    if all(r.ecdf_exact for r in reps) and total <= EXACT_LIMIT:
        xs = np.sort(np.concatenate([r.ecdf_t for r in reps]))
        t, p, exact = xs, np.arange(1, len(xs) + 1) / len(xs), True
        qs = {q: float(np.quantile(xs, q)) for q in QUANTILES}
    else:
        p = np.linspace(0.0, 1.0, SKETCH_POINTS)
        t = _mixture_quantiles(reps, p)
        exact = False
        qs = {q: float(np.interp(q, p, t)) for q in QUANTILES}

    events: dict = {}
    for r in reps:
        for key, val in r.events.items():
            events[key] = events.get(key, 0) + val
    return RunResult(
        count=int(total),
        mean=mean,
        variance=var,
        ci95=ci,
        ecdf_t=t,
        ecdf_p=p,
        ecdf_exact=exact,
        quantiles=qs,
        seed=reps[0].seed,
        digest=reps[0].digest,
        replications=sum(r.replications for r in reps),
        replication_means=rep_means,
        events=events,
        extra=dict(reps[0].extra),
    )
