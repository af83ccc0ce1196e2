"""Service-time laws and reproducible random streams.

Every law is an immutable value object.  Sampling goes through the
inverse CDF of a single uniform so the compiled and pure-Python
simulation kernels consume identical draw sequences.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "Exponential",
    "Pareto",
    "Deterministic",
    "CorrelatedExpMix",
    "ServiceDist",
    "RngStream",
    "MomentUndefined",
    "sample",
    "quantile",
    "cdf",
    "mean",
    "variance",
    "pareto_for_mean",
    "from_dict",
    "to_dict",
    "kernel_code",
]

# kernel type codes, shared with the simulation kernels
EXP, PARETO, DET, CORR = 0, 1, 2, 3


class MomentUndefined(ValueError):
    """Raised when a requested moment of a law is infinite."""


@dataclass(frozen=True)
class Exponential:
    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError(f"exponential rate must be > 0, got {self.rate}")


@dataclass(frozen=True)
class Pareto:
    xm: float
    alpha: float

    def __post_init__(self):
        if not self.xm > 0:
            raise ValueError(f"pareto scale must be > 0, got {self.xm}")
        if not self.alpha > 0:
            raise ValueError(f"pareto shape must be > 0, got {self.alpha}")


@dataclass(frozen=True)
class Deterministic:
    value: float

    def __post_init__(self):
        if not self.value >= 0:
            raise ValueError(f"deterministic value must be >= 0, got {self.value}")


@dataclass(frozen=True)
class CorrelatedExpMix:
    """Per-task time ``delta * Xd + (1 - delta) * Xr`` with Xd shared by a job.

    Both components are exponential at ``rate``.  The shared component
    is a job attribute, so this law cannot be sampled task by task.
    """

    rate: float
    delta: float

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError(f"rate must be > 0, got {self.rate}")
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError(f"delta must lie in [0, 1], got {self.delta}")


ServiceDist = Union[Exponential, Pareto, Deterministic, CorrelatedExpMix]


class RngStream:
    """A numbered substream of a 64-bit seed.

    Backed by numpy's Philox4x64 counter-based generator keyed through
    ``SeedSequence(seed, spawn_key=(stream,))``; both are specified
    bit-for-bit by numpy and stable across platforms.
    """

    def __init__(self, seed: int, stream: int = 0):
        seed, stream = int(seed), int(stream)
        if not 0 <= seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if stream < 0:
            raise ValueError("stream id must be nonnegative")
        self.seed = seed
        self.stream = stream
        self.bit_generator = np.random.Philox(
            np.random.SeedSequence(seed, spawn_key=(stream,))
        )
        self.generator = np.random.Generator(self.bit_generator)

    def uniform(self) -> float:
        return float(self.generator.random())

    def uniforms(self, size: int) -> np.ndarray:
        return self.generator.random(size)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream={self.stream})"


def quantile(dist: ServiceDist, u: float) -> float:
    """Inverse CDF at ``u`` in [0, 1)."""
    if isinstance(dist, Exponential):
        return -math.log(1.0 - u) / dist.rate
    if isinstance(dist, Pareto):
        # 1 - u keeps the base away from zero for u drawn from [0, 1)
        return dist.xm * (1.0 - u) ** (-1.0 / dist.alpha)
    if isinstance(dist, Deterministic):
        return dist.value
    if isinstance(dist, CorrelatedExpMix):
        return _mix_quantile(dist, u)
    raise TypeError(f"unknown distribution {dist!r}")


def sample(dist: ServiceDist, rng: RngStream) -> float:
    if isinstance(dist, CorrelatedExpMix):
        raise TypeError(
            "CorrelatedExpMix needs a per-job shared draw; "
            "use simcore.sample_correlated_services"
        )
    if isinstance(dist, Deterministic):
        return dist.value
    return quantile(dist, rng.uniform())


def cdf(dist: ServiceDist, x: float) -> float:
    if isinstance(dist, Exponential):
        return 0.0 if x <= 0 else -math.expm1(-dist.rate * x)
    if isinstance(dist, Pareto):
        return 0.0 if x < dist.xm else 1.0 - (dist.xm / x) ** dist.alpha
    if isinstance(dist, Deterministic):
        return 1.0 if x >= dist.value else 0.0
    if isinstance(dist, CorrelatedExpMix):
        return _mix_cdf(dist, x)
    raise TypeError(f"unknown distribution {dist!r}")


def _mix_rates(dist: CorrelatedExpMix):
    # delta*Xd and (1-delta)*Xr are exponentials at rate/delta and rate/(1-delta)
    d = dist.delta
    a = dist.rate / d if d > 0 else math.inf
    b = dist.rate / (1.0 - d) if d < 1 else math.inf
    return a, b


def _mix_cdf(dist, x):
    if x <= 0:
        return 0.0
    a, b = _mix_rates(dist)
    if math.isinf(a) or math.isinf(b):
        r = b if math.isinf(a) else a
        return -math.expm1(-r * x)
    if math.isclose(a, b, rel_tol=1e-12):
        return 1.0 - math.exp(-a * x) * (1.0 + a * x)
    # hypoexponential with two distinct rates
    return 1.0 - (b * math.exp(-a * x) - a * math.exp(-b * x)) / (b - a)


def _mix_quantile(dist, u):
    from scipy.optimize import brentq

    if u <= 0:
        return 0.0
    hi = 1.0 / dist.rate
    while _mix_cdf(dist, hi) < u:
        hi *= 2.0
    return brentq(lambda x: _mix_cdf(dist, x) - u, 0.0, hi, xtol=1e-15, rtol=1e-14)


def mean(dist: ServiceDist) -> float:
    if isinstance(dist, Exponential):
        return 1.0 / dist.rate
    if isinstance(dist, Pareto):
        if dist.alpha <= 1:
            raise MomentUndefined(f"pareto mean is infinite for alpha={dist.alpha}")
        return dist.alpha * dist.xm / (dist.alpha - 1.0)
    if isinstance(dist, Deterministic):
        return dist.value
    if isinstance(dist, CorrelatedExpMix):
        return 1.0 / dist.rate
    raise TypeError(f"unknown distribution {dist!r}")


def variance(dist: ServiceDist) -> float:
    if isinstance(dist, Exponential):
        return 1.0 / dist.rate**2
    if isinstance(dist, Pareto):
        a = dist.alpha
        if a <= 2:
            raise MomentUndefined(f"pareto variance is infinite for alpha={a}")
        return dist.xm**2 * a / ((a - 1.0) ** 2 * (a - 2.0))
    if isinstance(dist, Deterministic):
        return 0.0
    if isinstance(dist, CorrelatedExpMix):
        d = dist.delta
        return (d * d + (1.0 - d) ** 2) / dist.rate**2
    raise TypeError(f"unknown distribution {dist!r}")


def pareto_for_mean(target_mean: float, alpha: float) -> Pareto:
    """Pareto law with shape ``alpha`` whose mean equals ``target_mean``."""
    if not alpha > 1:
        raise ValueError(f"alpha must exceed 1 for a finite mean, got {alpha}")
    if not target_mean > 0:
        raise ValueError("target mean must be positive")
    return Pareto(xm=target_mean * (alpha - 1.0) / alpha, alpha=alpha)


def kernel_code(dist: ServiceDist):
    """(type code, p1, p2) triple understood by the simulation kernels."""
    if isinstance(dist, Exponential):
        return EXP, float(dist.rate), 0.0
    if isinstance(dist, Pareto):
        return PARETO, float(dist.xm), float(dist.alpha)
    if isinstance(dist, Deterministic):
        return DET, float(dist.value), 0.0
    if isinstance(dist, CorrelatedExpMix):
        return CORR, float(dist.rate), float(dist.delta)
    raise TypeError(f"unknown distribution {dist!r}")


def from_dict(d: dict) -> ServiceDist:
    kind = d.get("type")
    try:
        if kind == "exponential":
            return Exponential(float(d["rate"]))
        if kind == "pareto":
            return Pareto(float(d["xm"]), float(d["alpha"]))
        if kind == "deterministic":
            return Deterministic(float(d["value"]))
        if kind == "correlated_exp":
            return CorrelatedExpMix(float(d["rate"]), float(d["delta"]))
    except KeyError as exc:
        raise ValueError(f"distribution {kind!r} is missing field {exc}") from None
    raise ValueError(f"unknown distribution type {kind!r}")


def to_dict(dist: ServiceDist) -> dict:
    if isinstance(dist, Exponential):
        return {"type": "exponential", "rate": dist.rate}
    if isinstance(dist, Pareto):
        return {"type": "pareto", "xm": dist.xm, "alpha": dist.alpha}
    if isinstance(dist, Deterministic):
        return {"type": "deterministic", "value": dist.value}
    if isinstance(dist, CorrelatedExpMix):
        return {"type": "correlated_exp", "rate": dist.rate, "delta": dist.delta}
    raise TypeError(f"unknown distribution {dist!r}")
