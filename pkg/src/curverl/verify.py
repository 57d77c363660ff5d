"""Verification suites behind ``curverl verify``.

Each suite runs a set of numeric checks with pinned tolerances and returns
one record per check; the CLI prints a pass/fail line for each. Suites:

* ``theorem1``       quadrature recovery of the closed-form induced priors,
                     plus the finite-difference reverse-hazard identity
* ``corollary1``     degeneration of the adaptive weight to 1/p under the
                     exactly uniform reference
* ``prop1``          the entropic-risk weight's two limits and monotonicity
* ``prop2``          the Lipschitz transport bound on the utility gap
* ``prop4``          monotone calibration invariance (and its failure for
                     the pointwise 1/p rule)
* ``aggressiveness`` monotonicity of the relative multiplier for the
                     truncated-exponential reference family
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import refdist, weighting
from .passrate import DifficultyProfile, make_population
from .references import MonotoneMap, ReflectedTruncatedExponential, TruncatedExponential
from .trainer import calibration_invariance_check, pointwise_calibration_discrepancy

__all__ = ["Check", "SUITES", "run_suite", "available_suites"]

GRID_19 = np.arange(1, 20) * 0.05


@dataclass(frozen=True)
class Check:
    name: str
    measured: float
    threshold: float
    # Comparison is <= threshold unless a minimum is required.
    at_least: bool = False

    @property
    def passed(self) -> bool:
        if self.at_least:
            return self.measured >= self.threshold
        return self.measured <= self.threshold


def _suite_theorem1() -> list[Check]:
    checks = []
    for scheme in (weighting.Reinforce(), weighting.Grpo(), weighting.MaxRL()):
        name = weighting.scheme_name(scheme)
        fn = weighting.weight_function(scheme)
        worst_prior = 0.0
        worst_hazard = 0.0
        for p in GRID_19:
            closed = weighting.induced_prior(scheme, float(p))
            numeric = weighting.induced_prior_numeric(fn, float(p))
            worst_prior = max(worst_prior, abs(closed - numeric))
            worst_hazard = max(
                worst_hazard, weighting.reverse_hazard_identity_check(scheme, float(p))
            )
        checks.append(Check(f"induced_prior[{name}] quadrature vs closed form", worst_prior, 1e-6))
        checks.append(Check(f"reverse_hazard[{name}] finite-difference residual", worst_hazard, 1e-4))
    return checks


def _suite_corollary1() -> list[Check]:
    n = 8
    uniform = refdist.uniform_reference(n)
    curve = weighting.Curve(reference=uniform)
    maxrl = weighting.MaxRL()
    worst = max(
        abs(weighting.pointwise_weight(curve, float(p)) - weighting.pointwise_weight(maxrl, float(p)))
        for p in uniform.grid
    )
    return [Check("curve weight under uniform reference vs 1/p", worst, 1e-12)]


def _suite_prop1() -> list[Check]:
    grid = np.arange(1, 10) * 0.1
    small = max(abs(weighting.pointwise_weight(weighting.EntropicRisk(1e-4), float(p)) - 1.0)
                for p in grid)
    large = max(
        abs(50.0 * weighting.pointwise_weight(weighting.EntropicRisk(50.0), float(p)) - 1.0 / p)
        for p in grid
    )
    checks = [
        Check("entropic weight -> 1 as eta -> 0 (eta=1e-4)", small, 1e-4),
        Check("eta * entropic weight -> 1/p as eta -> inf (eta=50)", large, 1e-3),
    ]
    for eta in (0.5, 2.0, 10.0):
        values = [weighting.pointwise_weight(weighting.EntropicRisk(eta), float(p)) for p in grid]
        min_drop = float(np.min(-np.diff(values)))
        checks.append(Check(f"entropic weight strictly decreasing (eta={eta:g})",
                            min_drop, 0.0, at_least=True))
    return checks


def _suite_prop2(n_pairs: int = 50, n_rollouts: int = 8, seed: int = 1234) -> list[Check]:
    rng = np.random.default_rng(seed)
    grid = np.arange(1, n_rollouts) / n_rollouts
    checks = []
    for psi, label in ((weighting.Identity(), "identity"),
                       (weighting.ClippedLog(1e-3), "clipped_log")):
        worst_excess = -np.inf
        for _ in range(n_pairs):
            rates = rng.choice(grid, size=rng.integers(5, 60))
            ref_rates = rng.choice(grid, size=rng.integers(5, 60))
            ref = refdist.distribution_from_rates(ref_rates, n_rollouts)
            gap, bound = weighting.utility_gap_bound_check(psi, rates, ref)
            worst_excess = max(worst_excess, gap - bound)
        checks.append(
            Check(f"utility gap minus transport bound ({label})",
                  float(worst_excess), 2.0 / n_rollouts)
        )
    return checks


def _prop4_population(size: int = 20, seed: int = 7):
    return make_population(
        size, m=16,
        profile=DifficultyProfile(kind="beta", alpha=2.0, beta=3.0),
        seed=seed,
    )


def _suite_prop4() -> list[Check]:
    pop = _prop4_population()
    ref = TruncatedExponential(rate=4.0)
    checks = []
    for mono in (MonotoneMap.square(), MonotoneMap.sqrt()):
        disc = calibration_invariance_check(pop, ref, mono)
        checks.append(Check(f"adaptive gradient invariance under {mono.name} map", disc, 1e-8))
    disc, norm = pointwise_calibration_discrepancy(pop, weighting.MaxRL(), MonotoneMap.square())
    checks.append(Check("pointwise 1/p rule breaks invariance (square map)",
                        disc, 0.1 * norm, at_least=True))
    return checks


def _suite_aggressiveness() -> list[Check]:
    psi = weighting.Log()
    checks = []
    for ref, label, decreasing in (
        (TruncatedExponential(4.0), "truncated_exponential", True),
        (ReflectedTruncatedExponential(4.0), "reflected_truncated_exponential", False),
    ):
        values = [weighting.relative_multiplier(psi, ref, float(p)) for p in GRID_19]
        diffs = np.diff(values)
        if decreasing:
            checks.append(Check(f"relative multiplier strictly decreasing ({label})",
                                float(np.min(-diffs)), 0.0, at_least=True))
        else:
            checks.append(Check(f"relative multiplier strictly increasing ({label})",
                                float(np.min(diffs)), 0.0, at_least=True))
    return checks


SUITES = {
    "theorem1": _suite_theorem1,
    "corollary1": _suite_corollary1,
    "prop1": _suite_prop1,
    "prop2": _suite_prop2,
    "prop4": _suite_prop4,
    "aggressiveness": _suite_aggressiveness,
}


def available_suites() -> list[str]:
    return sorted(SUITES) + ["all"]


def run_suite(name: str) -> list[Check]:
    if name == "all":
        out: list[Check] = []
        for key in sorted(SUITES):
            out.extend(SUITES[key]())
        return out
    if name not in SUITES:
        raise KeyError(name)
    return SUITES[name]()
