"""Continuous reference distributions on [0, 1] and monotone recalibrations.

Grid histograms (:mod:`curverl.refdist`) are what training estimates; the
analytic families here serve the diagnostics that need smooth, exactly
differentiable CDFs: weight-aggressiveness comparisons and the calibration
invariance check, where pass rates get pushed through a monotone map and the
reference must be pushed forward with them.

Every reference exposes ``cdf_at`` / ``density_at``, the same protocol as the
grid-based :class:`~curverl.refdist.ReferenceDistribution`, so weighting code
accepts either kind.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import brentq

__all__ = [
    "ContinuousUniform",
    "TruncatedExponential",
    "ReflectedTruncatedExponential",
    "MonotoneMap",
    "PushforwardReference",
    "fit_reference_to_rates",
]


@dataclass(frozen=True)
class ContinuousUniform:
    """Uniform(0,1): F(p) = p, f(p) = 1."""

    def cdf_at(self, p: float) -> float:
        return float(p)

    def density_at(self, p: float) -> float:
        return 1.0


@dataclass(frozen=True)
class TruncatedExponential:
    """Exponential(rate) truncated to [0, 1]; mass concentrates near 0.

    F(p) = (1 - exp(-rate p)) / (1 - exp(-rate)). Its reverse hazard decays
    faster than 1/p, so as a reference it reweights low pass rates more
    aggressively than the 1/p rule.
    """

    rate: float

    def __post_init__(self) -> None:
        if self.rate <= 0:
            raise ValueError("rate must be > 0")

    def cdf_at(self, p: float) -> float:
        return float(-math.expm1(-self.rate * p) / -math.expm1(-self.rate))

    def density_at(self, p: float) -> float:
        return float(self.rate * math.exp(-self.rate * p) / -math.expm1(-self.rate))

    def mean(self) -> float:
        return 1.0 / self.rate - 1.0 / math.expm1(self.rate)


@dataclass(frozen=True)
class ReflectedTruncatedExponential:
    """Distribution of 1 - Z for truncated-exponential Z; mass near 1.

    F(p) = (exp(rate p) - 1) / (exp(rate) - 1). As a reference it is more
    conservative than the 1/p rule on low pass rates.
    """

    rate: float

    def __post_init__(self) -> None:
        if self.rate <= 0:
            raise ValueError("rate must be > 0")

    def cdf_at(self, p: float) -> float:
        return float(math.expm1(self.rate * p) / math.expm1(self.rate))

    def density_at(self, p: float) -> float:
        return float(self.rate * math.exp(self.rate * p) / math.expm1(self.rate))

    def mean(self) -> float:
        return 1.0 - (1.0 / self.rate - 1.0 / math.expm1(self.rate))


@dataclass(frozen=True)
class MonotoneMap:
    """Strictly increasing differentiable recalibration of [0, 1].

    Bundles the forward map, its inverse, and its derivative so pushforward
    densities can be evaluated without numeric inversion.
    """

    name: str
    forward: Callable[[float], float]
    inverse: Callable[[float], float]
    dforward: Callable[[float], float]

    def validate(self, samples: int = 101) -> None:
        """Reject non-increasing maps (checked on a grid, endpoints excluded)."""
        grid = np.linspace(0.0, 1.0, samples)[1:-1]
        values = np.array([self.forward(float(t)) for t in grid])
        if np.any(np.diff(values) <= 0):
            raise ValueError(f"map {self.name!r} is not strictly increasing on (0, 1)")

    @staticmethod
    def identity() -> "MonotoneMap":
        return MonotoneMap("identity", lambda t: t, lambda u: u, lambda t: 1.0)

    @staticmethod
    def square() -> "MonotoneMap":
        return MonotoneMap("square", lambda t: t * t, math.sqrt, lambda t: 2.0 * t)

    @staticmethod
    def sqrt() -> "MonotoneMap":
        return MonotoneMap("sqrt", math.sqrt, lambda u: u * u, lambda t: 0.5 / math.sqrt(t))


@dataclass(frozen=True)
class PushforwardReference:
    """Reference for recalibrated rates u = G(p) given a reference for p.

    CDF composes with the inverse map; density follows the change-of-variables
    rule f(G^-1(u)) / G'(G^-1(u)).
    """

    base: object
    map: MonotoneMap

    def cdf_at(self, u: float) -> float:
        return float(self.base.cdf_at(self.map.inverse(u)))

    def density_at(self, u: float) -> float:
        v = self.map.inverse(u)
        return float(self.base.density_at(v) / self.map.dforward(v))


def fit_reference_to_rates(rates) -> TruncatedExponential | ReflectedTruncatedExponential | ContinuousUniform:
    """Smooth reference matching the mean of the given pass rates.

    Picks the truncated-exponential family (mean < 1/2), its reflection
    (mean > 1/2), or the uniform (mean = 1/2) and solves the rate parameter by
    moment matching. The result has a smooth positive density on [0, 1], which
    the calibration-invariance check requires.
    """
    mean = float(np.mean(np.asarray(rates, dtype=np.float64)))
    if not 0.0 < mean < 1.0:
        raise ValueError("rates must have a mean strictly inside (0, 1)")
    if abs(mean - 0.5) < 1e-9:
        return ContinuousUniform()
    target = mean if mean < 0.5 else 1.0 - mean
    # TruncatedExponential mean decreases from 1/2 (rate -> 0) toward 0.
    rate = brentq(lambda lam: TruncatedExponential(lam).mean() - target, 1e-8, 500.0,
                  xtol=1e-13, maxiter=200)
    if mean < 0.5:
        return TruncatedExponential(rate)
    return ReflectedTruncatedExponential(rate)
