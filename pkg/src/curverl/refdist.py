"""Reference pass-rate distributions on the rollout grid.

With N rollouts per prompt, empirical pass rates kept for training live on
the interior grid {1/N, ..., (N-1)/N} (rates 0 and 1 carry no gradient and
are dropped). A sliding window of recent rates feeds a histogram estimate of
the reference CDF and density; bin width is 1/N, so density is mass * N and
is exact for grid-valued data.

Floors keep the CDF and density away from zero because the adaptive weight
divides by the CDF: cdf_floor = 1/(count+1), density_floor = 0.5*N/(count+1).
The floors are a weighting safeguard only; distances between distributions
(:func:`wasserstein1`) use the raw, pre-floor CDFs.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .ioutil import fmt_float

log = logging.getLogger("curverl.refdist")

__all__ = [
    "ColdStartError",
    "SlidingWindow",
    "ReferenceDistribution",
    "uniform_reference",
    "estimate",
    "distribution_from_rates",
    "exact_policy_distribution",
    "wasserstein1",
    "offgrid_snap_count",
    "reference_csv_rows",
    "REFERENCE_CSV_HEADER",
    "load_reference_csv",
]


class ColdStartError(RuntimeError):
    """The window holds no rates yet; callers fall back to the uniform reference."""


_offgrid_snaps = 0


def offgrid_snap_count() -> int:
    """Number of off-grid queries snapped to the nearest grid point so far."""
    return _offgrid_snaps


def _snap_index(p: float, n_rollouts: int, warn: bool = False) -> int:
    """Nearest interior grid index (1-based k of k/N).

    With ``warn=True`` (point queries) any p that is not an interior grid
    point bumps the off-grid counter; the histogram builders snap silently
    because binning arbitrary rates is their documented job.
    """
    global _offgrid_snaps
    scaled = p * n_rollouts
    k = int(round(scaled))
    if warn and (abs(scaled - k) > 1e-9 or not 1 <= k <= n_rollouts - 1):
        _offgrid_snaps += 1
        log.debug("off-grid pass rate %.17g snapped on the N=%d grid", p, n_rollouts)
    return min(max(k, 1), n_rollouts - 1)


@dataclass
class SlidingWindow:
    """FIFO store of (step, pass rate) pairs covering the last t0 steps.

    Eviction is by step tag: pushing at step t first removes every entry with
    tag <= t - t0, so the window always spans steps (t - t0, t]. Rates outside
    (0, 1) are dropped on append; they carry no gradient and would distort the
    reference estimate. ``capacity`` (t0 x batch size, when known) is an
    invariant the step-tag eviction guarantees for per-step pushes of at most
    one batch; it is asserted when set.
    """

    t0: int
    capacity: int | None = None
    entries: deque = field(default_factory=deque)
    _last_step: int | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.t0 < 1:
            raise ValueError("t0 must be >= 1")
        if self.capacity is not None and self.capacity < 1:
            raise ValueError("capacity must be >= 1 when given")

    def __len__(self) -> int:
        return len(self.entries)

    def push(self, step: int, pass_rates) -> None:
        if self._last_step is not None and step < self._last_step:
            raise ValueError(f"steps must be nondecreasing (got {step} after {self._last_step})")
        self._last_step = step
        cutoff = step - self.t0
        while self.entries and self.entries[0][0] <= cutoff:
            self.entries.popleft()
        for rate in np.asarray(pass_rates, dtype=np.float64).ravel():
            if 0.0 < rate < 1.0:
                self.entries.append((step, float(rate)))
        if self.capacity is not None and len(self.entries) > self.capacity:
            raise RuntimeError(
                f"window holds {len(self.entries)} rates, beyond capacity {self.capacity}"
            )

    def rates(self) -> np.ndarray:
        return np.array([r for _, r in self.entries], dtype=np.float64)


@dataclass(frozen=True)
class ReferenceDistribution:
    """Histogram distribution over the interior rollout grid.

    ``cdf`` and ``density`` hold the raw (pre-floor) values; the ``cdf_at`` /
    ``density_at`` accessors apply the floors used by weighting. The terminal
    CDF entry of any histogram-estimated instance is 1; the uniform reference
    is the one exception (it represents the continuous uniform law evaluated
    at grid points, so its terminal entry is (N-1)/N).
    """

    n_rollouts: int
    bin_mass: np.ndarray
    cdf: np.ndarray
    density: np.ndarray
    sample_count: int
    cdf_floor: float
    density_floor: float

    def __post_init__(self) -> None:
        n = self.n_rollouts
        if n < 2:
            raise ValueError("n_rollouts must be >= 2")
        for name in ("bin_mass", "cdf", "density"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != (n - 1,):
                raise ValueError(f"{name} must have length n_rollouts - 1")
            object.__setattr__(self, name, arr)
        if np.any(np.diff(self.cdf) < -1e-12):
            raise ValueError("cdf must be nondecreasing")

    @property
    def grid(self) -> np.ndarray:
        return np.arange(1, self.n_rollouts) / self.n_rollouts

    def cdf_at(self, p: float) -> float:
        """Floored cumulative mass at the grid point nearest p; never 0."""
        raw = self.cdf[_snap_index(p, self.n_rollouts, warn=True) - 1]
        return float(min(max(raw, self.cdf_floor), 1.0))

    def density_at(self, p: float) -> float:
        """Floored per-unit-length density at the grid point nearest p."""
        raw = self.density[_snap_index(p, self.n_rollouts, warn=True) - 1]
        return float(max(raw, self.density_floor))

    def floored_cdf(self) -> np.ndarray:
        return np.minimum(np.maximum(self.cdf, self.cdf_floor), 1.0)

    def floored_density(self) -> np.ndarray:
        return np.maximum(self.density, self.density_floor)

    def raw_cdf_at(self, p: float) -> float:
        return float(self.cdf[_snap_index(p, self.n_rollouts, warn=True) - 1])


def uniform_reference(n_rollouts: int) -> ReferenceDistribution:
    """Continuous Uniform(0,1) sampled at the grid: F(k/N) = k/N, f = 1.

    This is the cold-start fallback and the neutral reference under which the
    adaptive weight degenerates to 1/p exactly.
    """
    n = n_rollouts
    grid = np.arange(1, n) / n
    return ReferenceDistribution(
        n_rollouts=n,
        bin_mass=np.full(n - 1, 1.0 / n),
        cdf=grid.copy(),
        density=np.ones(n - 1),
        sample_count=0,
        cdf_floor=0.0,
        density_floor=0.0,
    )


def _histogram(indices: np.ndarray, weights: np.ndarray | None, n_rollouts: int,
               sample_count: int) -> ReferenceDistribution:
    counts = np.bincount(indices - 1, weights=weights, minlength=n_rollouts - 1)
    counts = counts.astype(np.float64)
    total = counts.sum()
    if total <= 0:
        raise ColdStartError("no mass to build a reference distribution from")
    mass = counts / total
    cdf = np.cumsum(mass)
    cdf[-1] = 1.0  # guard the terminal entry against cumsum roundoff
    return ReferenceDistribution(
        n_rollouts=n_rollouts,
        bin_mass=mass,
        cdf=cdf,
        density=mass * n_rollouts,
        sample_count=sample_count,
        cdf_floor=1.0 / (sample_count + 1),
        density_floor=0.5 * n_rollouts / (sample_count + 1),
    )


def estimate(window: SlidingWindow, n_rollouts: int) -> ReferenceDistribution:
    """Histogram estimate of the reference distribution from the lagged window."""
    rates = window.rates()
    if rates.size == 0:
        raise ColdStartError("sliding window is empty")
    indices = np.array([_snap_index(r, n_rollouts) for r in rates], dtype=np.int64)
    return _histogram(indices, None, n_rollouts, sample_count=int(rates.size))


def distribution_from_rates(rates, n_rollouts: int, weights=None) -> ReferenceDistribution:
    """Snap arbitrary rates in [0, 1] onto the grid with optional weights."""
    rates = np.asarray(rates, dtype=np.float64).ravel()
    if rates.size == 0:
        raise ColdStartError("no rates given")
    indices = np.array([_snap_index(r, n_rollouts) for r in rates], dtype=np.int64)
    w = None if weights is None else np.asarray(weights, dtype=np.float64).ravel()
    return _histogram(indices, w, n_rollouts, sample_count=int(rates.size))


def exact_policy_distribution(population, n_rollouts: int) -> ReferenceDistribution:
    """Grid histogram of the analytic pass rates of a population under d0.

    This is the pushforward of the base prompt distribution through the exact
    pass-rate map, used as the oracle target for :func:`estimate`.
    """
    from .passrate import exact_pass_rate

    rates = np.array([exact_pass_rate(p) for p in population.prompts])
    return distribution_from_rates(rates, n_rollouts, weights=population.base_weights)


def wasserstein1(a: ReferenceDistribution, b: ReferenceDistribution) -> float:
    """1-d W1 distance on the shared grid: sum |F_a - F_b| / N, pre-floor CDFs."""
    if a.n_rollouts != b.n_rollouts:
        raise ValueError("distributions live on different grids")
    return float(np.abs(a.cdf - b.cdf).sum() / a.n_rollouts)


REFERENCE_CSV_HEADER = ("step", "grid_point", "mass", "cdf", "density")


def reference_csv_rows(step: int, ref: ReferenceDistribution) -> list[str]:
    """One CSV row per grid point; cdf and density are the floored values
    actually consumed by weighting, mass is raw."""
    cdf = ref.floored_cdf()
    dens = ref.floored_density()
    rows = []
    for k, p in enumerate(ref.grid):
        rows.append(
            f"{step},{fmt_float(p)},{fmt_float(ref.bin_mass[k])},"
            f"{fmt_float(cdf[k])},{fmt_float(dens[k])}"
        )
    return rows


def load_reference_csv(path) -> ReferenceDistribution:
    """Rebuild a reference from a dump, using the last step block in the file.

    Loaded cdf/density columns are already floored, so the instance carries
    zero floors and reproduces the dumped weights exactly.
    """
    steps: dict[int, list[tuple[float, float, float, float]]] = {}
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != REFERENCE_CSV_HEADER:
            raise ValueError(f"unexpected reference CSV header: {header}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            step_s, grid_s, mass_s, cdf_s, dens_s = line.split(",")
            steps.setdefault(int(step_s), []).append(
                (float(grid_s), float(mass_s), float(cdf_s), float(dens_s))
            )
    if not steps:
        raise ValueError(f"no reference rows in {path}")
    rows = sorted(steps[max(steps)], key=lambda r: r[0])
    n = len(rows) + 1
    grid = np.array([r[0] for r in rows])
    if not np.allclose(grid, np.arange(1, n) / n, atol=1e-12):
        raise ValueError("reference CSV grid is not of the form k/N")
    return ReferenceDistribution(
        n_rollouts=n,
        bin_mass=np.array([r[1] for r in rows]),
        cdf=np.array([r[2] for r in rows]),
        density=np.array([r[3] for r in rows]),
        sample_count=0,
        cdf_floor=0.0,
        density_floor=0.0,
    )
