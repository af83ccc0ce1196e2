"""Closed-form response-time analysis of the (n, k) fork-join system.

The upper bounds come from the split-merge construction, where the whole
job is served as one M/G/1 customer whose service time is the k-th order
statistic of the n task times.  The lower bound serves the k tasks in
memoryless stages.
"""
from __future__ import annotations

import json
import math
from fractions import Fraction
from dataclasses import asdict, dataclass
from typing import Optional

from . import dists
from .dists import MomentUndefined

__all__ = [
    "Unstable",
    "SystemParams",
    "BoundsReport",
    "harmonic",
    "harmonic2",
    "exp_orderstat_mean",
    "exp_orderstat_var",
    "pk_mg1_mean",
    "upper_bound_exp",
    "lower_bound_exp",
    "bounds",
    "upper_bound_general",
    "cnk_two_point",
    "numeric_orderstat_moments",
    "correlated_mean",
]


class Unstable(ValueError):
    """The queue has no steady state at the requested load."""


@dataclass(frozen=True)
class SystemParams:
    n: int
    k: int
    lam: float
    mu: float

    def __post_init__(self):
        if not 1 <= self.k <= self.n:
            raise ValueError(f"need 1 <= k <= n, got n={self.n}, k={self.k}")
        if not self.lam > 0:
            raise ValueError("arrival rate must be positive")
        if not self.mu > 0:
            raise ValueError("service rate must be positive")

    @property
    def mu_prime(self) -> float:
        """Per-disk task rate; each disk holds 1/k of the content."""
        return self.k * self.mu


@dataclass(frozen=True)
class BoundsReport:
    lower: Optional[float]
    upper: Optional[float]
    es: float
    es2: float
    rho: float
    stable: bool

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def harmonic(n: int) -> float:
    return math.fsum(1.0 / j for j in range(1, n + 1))


def harmonic2(n: int) -> float:
    return math.fsum(1.0 / (j * j) for j in range(1, n + 1))


def _check_nk(n, k):
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got n={n}, k={k}")


def exp_orderstat_mean(n: int, k: int, rate: float) -> float:
    """E of the k-th smallest of n i.i.d. Exp(rate)."""
    _check_nk(n, k)
    return math.fsum(1.0 / (n - k + i) for i in range(1, k + 1)) / rate


def exp_orderstat_var(n: int, k: int, rate: float) -> float:
    _check_nk(n, k)
    return math.fsum(1.0 / (n - k + i) ** 2 for i in range(1, k + 1)) / rate**2


def pk_mg1_mean(lam: float, es: float, es2: float) -> float:
    """Pollaczek-Khinchin mean sojourn time of an M/G/1 queue."""
    rho = lam * es
    if rho >= 1:
        raise Unstable(f"M/G/1 load {rho:.6g} >= 1")
    if es2 < es * es * (1.0 - 1e-12):
        raise ValueError(f"inconsistent moments: E[S^2]={es2} < E[S]^2={es * es}")
    return es + lam * es2 / (2.0 * (1.0 - rho))


def _split_merge_exp_moments(p: SystemParams):
    es = exp_orderstat_mean(p.n, p.k, p.mu_prime)
    es2 = exp_orderstat_var(p.n, p.k, p.mu_prime) + es * es
    return es, es2


def _exact_upper(p: SystemParams) -> Fraction:
    # rational evaluation on the float inputs, rounded once by the caller
    lam, mp = Fraction(p.lam), Fraction(p.k) * Fraction(p.mu)
    lo = p.n - p.k
    es = sum(Fraction(1, i) for i in range(lo + 1, p.n + 1)) / mp
    var = sum(Fraction(1, i * i) for i in range(lo + 1, p.n + 1)) / (mp * mp)
    rho = lam * es
    if rho >= 1:
        raise Unstable(f"M/G/1 load {float(rho):.6g} >= 1")
    return es + lam * (var + es * es) / (2 * (1 - rho))


def upper_bound_exp(p: SystemParams) -> float:
    """P-K mean of the exponential split-merge system, correctly rounded."""
    return float(_exact_upper(p))


def lower_bound_exp(p: SystemParams) -> float:
    lam, mp = Fraction(p.lam), Fraction(p.k) * Fraction(p.mu)
    total = Fraction(0)
    for i in range(p.n - p.k + 1, p.n + 1):
        denom = i * mp - lam
        if denom <= 0:
            raise Unstable(f"stage with {i} active disks is overloaded")
        total += 1 / denom
    return float(total)


def bounds(p: SystemParams) -> BoundsReport:
    """Both exponential-service bounds plus the split-merge inputs."""
    es, es2 = _split_merge_exp_moments(p)
    rho = p.lam * es
    try:
        lower = lower_bound_exp(p)
    except Unstable:
        lower = None
    try:
        upper = upper_bound_exp(p)
    except Unstable:
        upper = None
    return BoundsReport(lower=lower, upper=upper, es=es, es2=es2, rho=rho, stable=upper is not None)


def upper_bound_general(n: int, k: int, lam: float, es: float, sigma: float, cnk: float) -> float:
    """Distribution-free upper bound from the task mean ``es`` and std ``sigma``.

    ``cnk`` is the constant bounding V[S] / sigma^2 for the k-th order
    statistic of n draws; see :func:`cnk_two_point`.
    """
    _check_nk(n, k)
    if not cnk > 0:
        raise ValueError("cnk must be positive")
    m = es + sigma * math.sqrt((k - 1) / (n - k + 1))
    if lam * m >= 1:
        raise Unstable(f"load bound {lam * m:.6g} >= 1")
    return m + lam * (m * m + cnk * sigma * sigma) / (2.0 * (1.0 - lam * m))


def _two_point_ratio(n, k, x):
    import numpy as np
    from scipy.special import expit
    from scipy.stats import binom

    x = np.asarray(x, dtype=float)
    # at least k of n low <=> at most n-k high; evaluating with the smaller
    # probability keeps p near 1 from rounding into the ratio
    kk = np.where(x > 0, n - k + 1, k)
    x = -np.abs(x)
    p = expit(x)
    # S takes the low value iff at least k of n draws are low
    q = binom.sf(kk - 1, n, p)
    return q * binom.cdf(kk - 1, n, p) / (p * expit(-x))


def cnk_two_point(n: int, k: int) -> float:
    """Largest V[S]/sigma^2 over two-point parent laws.

    For a parent taking two values with probabilities p and 1-p, the k-th
    order statistic is again two-point, and the variance ratio depends on
    p alone.  We maximise over p on a logit grid, then polish with a
    bounded scalar search.
    """
    import numpy as np
    from scipy.optimize import minimize_scalar

    _check_nk(n, k)
    if n == 1:
        return 1.0
    xs = np.linspace(-30.0, 30.0, 6001)
    vals = _two_point_ratio(n, k, xs)
    i = int(np.nanargmax(vals))
    lo, hi = xs[max(i - 1, 0)], xs[min(i + 1, len(xs) - 1)]
    res = minimize_scalar(
        lambda x: -float(_two_point_ratio(n, k, x)),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-10},
    )
    return float(max(vals[i], -res.fun))


def numeric_orderstat_moments(dist, n: int, k: int):
    """(E[S], E[S^2]) for the k-th order statistic of n i.i.d. draws.

    Integrates over the quantile transform u = F(x); the tail half of the
    unit interval is mapped through u = 1 - exp(-t) so that Pareto and
    exponential quantile singularities become decaying integrands.
    """
    from scipy.integrate import quad
    from scipy.special import betaln

    _check_nk(n, k)
    if isinstance(dist, dists.Deterministic):
        return dist.value, dist.value**2
    if isinstance(dist, dists.CorrelatedExpMix):
        # shared part adds straight through the order statistic
        d, r = dist.delta, dist.rate
        m = exp_orderstat_mean(n, k, r)
        v = exp_orderstat_var(n, k, r)
        es = d / r + (1.0 - d) * m
        return es, d * d / r**2 + (1.0 - d) ** 2 * v + es * es
    if isinstance(dist, dists.Pareto) and dist.alpha <= 2:
        raise MomentUndefined(f"pareto variance is infinite for alpha={dist.alpha}")

    lognorm = -betaln(k, n - k + 1)

    def head(u, p):
        if u > 0:
            w = math.exp(lognorm + (k - 1) * math.log(u) + (n - k) * math.log1p(-u))
        else:
            w = math.exp(lognorm) if k == 1 else 0.0
        return dists.quantile(dist, u) ** p * w

    def tail(t, p):
        # u = 1 - e^{-t}, du = e^{-t} dt, (1-u)^{n-k} = e^{-(n-k)t}
        u = -math.expm1(-t)
        logw = lognorm + (k - 1) * math.log(u) - (n - k + 1) * t
        if isinstance(dist, dists.Pareto):
            # stay in log space, the quantile overflows long before the weight vanishes
            return math.exp(logw + p * (math.log(dist.xm) + t / dist.alpha))
        if isinstance(dist, dists.Exponential):
            x = t / dist.rate
        else:
            x = dists.quantile(dist, u)
        return x**p * math.exp(logw) if x > 0 else 0.0

    opts = dict(epsabs=1e-10, epsrel=1e-8, limit=400)
    out = []
    for p in (1, 2):
        a, _ = quad(head, 0.0, 0.5, args=(p,), **opts)
        b, _ = quad(tail, math.log(2.0), math.inf, args=(p,), **opts)
        out.append(a + b)
    return out[0], out[1]


def correlated_mean(p: SystemParams, delta: float, t_base: float) -> float:
    """Mean response under task times delta*Xd + (1-delta)*Xr."""
    if not 0.0 <= delta <= 1.0:
        raise ValueError("delta must lie in [0, 1]")
    if t_base < 0:
        raise ValueError("baseline mean must be nonnegative")
    return delta / (p.k * p.mu) + (1.0 - delta) * t_base
