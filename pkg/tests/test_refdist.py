"""Sliding window, histogram reference estimation, Wasserstein distance."""

import numpy as np
import pytest

from curverl.passrate import DifficultyProfile, exact_pass_rate, make_population
from curverl.refdist import (
    ColdStartError,
    ReferenceDistribution,
    SlidingWindow,
    distribution_from_rates,
    estimate,
    exact_policy_distribution,
    load_reference_csv,
    offgrid_snap_count,
    reference_csv_rows,
    uniform_reference,
    wasserstein1,
    REFERENCE_CSV_HEADER,
)


def random_reference(rng, n=8):
    grid = np.arange(1, n) / n
    rates = rng.choice(grid, size=int(rng.integers(3, 40)))
    return distribution_from_rates(rates, n)


class TestSlidingWindow:
    def test_full_eviction_at_t0_one(self):
        w = SlidingWindow(t0=1)
        w.push(0, [0.25, 0.5, 0.75])
        assert len(w) == 3
        w.push(1, [0.125])
        assert len(w) == 1
        assert w.rates().tolist() == [0.125]

    def test_degenerate_rates_are_dropped(self):
        w = SlidingWindow(t0=4)
        w.push(0, [0.0, 0.5, 1.0])
        assert len(w) == 1
        assert w.rates().tolist() == [0.5]

    def test_eviction_keeps_exactly_last_t0_steps(self):
        w = SlidingWindow(t0=3)
        for step in range(10):
            w.push(step, [0.5, 0.25])
        # steps 7, 8, 9 remain
        assert len(w) == 6
        assert {s for s, _ in w.entries} == {7, 8, 9}

    def test_capacity_bound_holds(self):
        batch = 5
        w = SlidingWindow(t0=4)
        rng = np.random.default_rng(0)
        for step in range(50):
            w.push(step, rng.uniform(0.01, 0.99, size=batch))
            assert len(w) <= 4 * batch

    def test_identical_runs_identical_contents(self):
        def run():
            w = SlidingWindow(t0=2)
            rng = np.random.default_rng(11)
            for step in range(6):
                w.push(step, rng.uniform(0, 1, size=4))
            return list(w.entries)

        assert run() == run()

    def test_steps_must_not_regress(self):
        w = SlidingWindow(t0=2)
        w.push(5, [0.5])
        with pytest.raises(ValueError):
            w.push(4, [0.5])

    def test_t0_must_be_positive(self):
        with pytest.raises(ValueError):
            SlidingWindow(t0=0)


class TestEstimate:
    def test_single_rate(self):
        w = SlidingWindow(t0=1)
        w.push(0, [0.5])
        ref = estimate(w, 8)
        assert ref.bin_mass[3] == 1.0  # grid point 4/8
        assert ref.cdf_at(0.5) == 1.0
        assert ref.density_at(0.5) == 8.0

    def test_uniform_window(self):
        w = SlidingWindow(t0=1)
        w.push(0, np.arange(1, 8) / 8)
        ref = estimate(w, 8)
        for k in range(1, 8):
            assert ref.cdf[k - 1] == pytest.approx(k / 7, abs=1e-12)

    def test_empty_window_signals_cold_start(self):
        with pytest.raises(ColdStartError):
            estimate(SlidingWindow(t0=1), 8)

    def test_invariants_after_estimate(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            w = SlidingWindow(t0=10)
            w.push(0, rng.uniform(0.01, 0.99, size=int(rng.integers(1, 100))))
            ref = estimate(w, 8)
            assert np.all(np.diff(ref.cdf) >= -1e-15)
            assert ref.cdf[-1] == pytest.approx(1.0, abs=1e-12)
            np.testing.assert_allclose(ref.density, ref.bin_mass * 8, atol=1e-12)
            floored = ref.floored_cdf()
            assert np.all(floored >= ref.cdf_floor)
            assert np.all(ref.floored_density() >= ref.density_floor)


class TestAccessors:
    def test_uniform_reference_cdf_is_identity_on_grid(self):
        ref = uniform_reference(8)
        assert ref.cdf_at(0.25) == 0.25
        assert ref.density_at(0.25) == 1.0

    def test_far_bin_query_hits_floor(self):
        ref = distribution_from_rates([7 / 8], 8)
        assert ref.cdf_at(1 / 8) == ref.cdf_floor == 1.0 / 2.0
        assert ref.density_at(1 / 8) == ref.density_floor

    def test_top_grid_point_has_full_mass(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            ref = random_reference(rng)
            assert ref.cdf_at(7 / 8) == 1.0

    def test_off_grid_queries_snap_and_count(self):
        ref = uniform_reference(8)
        before = offgrid_snap_count()
        assert ref.cdf_at(0.26) == 0.25  # snaps to 2/8
        assert offgrid_snap_count() == before + 1

    def test_floors_shrink_with_sample_count(self):
        small = distribution_from_rates([0.5] * 3, 8)
        large = distribution_from_rates([0.5] * 300, 8)
        assert large.cdf_floor < small.cdf_floor
        assert large.density_floor < small.density_floor


class TestExactPolicyDistribution:
    def test_identical_prompts_concentrate(self):
        pop = make_population(5, m=8, seed=0,
                              profile=DifficultyProfile(kind="fixed", targets=(0.5,)))
        ref = exact_policy_distribution(pop, 8)
        assert ref.bin_mass[3] == pytest.approx(1.0, abs=1e-12)

    def test_two_prompt_split(self):
        pop = make_population(2, m=8, seed=1,
                              profile=DifficultyProfile(kind="fixed", targets=(0.25, 0.75)))
        ref = exact_policy_distribution(pop, 8)
        assert ref.bin_mass[1] == pytest.approx(0.5, abs=1e-12)  # 2/8
        assert ref.bin_mass[5] == pytest.approx(0.5, abs=1e-12)  # 6/8

    def test_estimate_converges_to_exact_distribution(self):
        # Monte Carlo oracle: push the exact pass rates of prompts sampled
        # from d0 and compare the histogram against the analytic pushforward.
        pop = make_population(
            60, m=16, seed=9, profile=DifficultyProfile(kind="beta", alpha=2.0, beta=2.0)
        )
        exact = exact_policy_distribution(pop, 8)
        rates = np.array([exact_pass_rate(p) for p in pop.prompts])
        rng = np.random.default_rng(17)
        w = SlidingWindow(t0=1)
        picks = rng.choice(len(pop), size=10_000, p=pop.base_weights)
        w.push(0, rates[picks])
        est = estimate(w, 8)
        tv = 0.5 * np.abs(est.bin_mass - exact.bin_mass).sum()
        assert tv < 0.05

    def test_estimate_w1_consistency_three_seeds(self):
        pop = make_population(
            40, m=16, seed=2, profile=DifficultyProfile(kind="beta", alpha=2.0, beta=3.0)
        )
        exact = exact_policy_distribution(pop, 8)
        rates = np.array([exact_pass_rate(p) for p in pop.prompts])
        for seed in (0, 1, 2):
            rng = np.random.default_rng(seed)
            w = SlidingWindow(t0=1)
            picks = rng.choice(len(pop), size=2000, p=pop.base_weights)
            w.push(0, rates[picks])
            assert wasserstein1(estimate(w, 8), exact) < 0.05


class TestWasserstein:
    def test_identity(self):
        ref = distribution_from_rates([0.25, 0.5], 8)
        assert wasserstein1(ref, ref) == 0.0

    def test_point_masses(self):
        a = distribution_from_rates([2 / 8], 8)
        b = distribution_from_rates([6 / 8], 8)
        assert wasserstein1(a, b) == pytest.approx(0.5, abs=1e-15)

    def test_symmetry(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            a, b = random_reference(rng), random_reference(rng)
            assert wasserstein1(a, b) == wasserstein1(b, a)

    def test_triangle_inequality(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            a, b, c = (random_reference(rng) for _ in range(3))
            assert wasserstein1(a, c) <= wasserstein1(a, b) + wasserstein1(b, c) + 1e-12

    def test_identity_of_indiscernibles(self):
        rng = np.random.default_rng(10)
        for _ in range(20):
            a, b = random_reference(rng), random_reference(rng)
            if wasserstein1(a, b) == 0.0:
                np.testing.assert_array_equal(a.cdf, b.cdf)

    def test_grid_mismatch_rejected(self):
        with pytest.raises(ValueError):
            wasserstein1(distribution_from_rates([0.5], 8), distribution_from_rates([0.5], 16))


class TestCsvSnapshot:
    def test_round_trip_preserves_floored_values(self, tmp_path):
        ref = distribution_from_rates([1 / 8, 1 / 8, 3 / 8, 7 / 8], 8)
        path = tmp_path / "refdist.csv"
        with open(path, "w") as fh:
            fh.write(",".join(REFERENCE_CSV_HEADER) + "\n")
            for row in reference_csv_rows(3, ref):
                fh.write(row + "\n")
        loaded = load_reference_csv(path)
        assert loaded.n_rollouts == 8
        for p in loaded.grid:
            assert loaded.cdf_at(float(p)) == ref.cdf_at(float(p))
            assert loaded.density_at(float(p)) == ref.density_at(float(p))

    def test_last_step_block_wins(self, tmp_path):
        early = distribution_from_rates([1 / 8], 8)
        late = distribution_from_rates([5 / 8], 8)
        path = tmp_path / "refdist.csv"
        with open(path, "w") as fh:
            fh.write(",".join(REFERENCE_CSV_HEADER) + "\n")
            for row in reference_csv_rows(0, early) + reference_csv_rows(1, late):
                fh.write(row + "\n")
        loaded = load_reference_csv(path)
        assert loaded.density_at(5 / 8) == late.density_at(5 / 8)

    def test_rejects_malformed_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,c\n")
        with pytest.raises(ValueError):
            load_reference_csv(path)


class TestValidation:
    def test_reference_needs_consistent_lengths(self):
        with pytest.raises(ValueError):
            ReferenceDistribution(
                n_rollouts=8,
                bin_mass=np.ones(3) / 3,
                cdf=np.ones(7),
                density=np.ones(7),
                sample_count=1,
                cdf_floor=0.1,
                density_floor=0.1,
            )

    def test_cdf_must_be_monotone(self):
        with pytest.raises(ValueError):
            ReferenceDistribution(
                n_rollouts=8,
                bin_mass=np.full(7, 1 / 7),
                cdf=np.array([0.5, 0.4, 0.6, 0.7, 0.8, 0.9, 1.0]),
                density=np.full(7, 8 / 7),
                sample_count=1,
                cdf_floor=0.1,
                density_floor=0.1,
            )
