#!/usr/bin/env python3
"""Benchmark the compiled step kernels against the numpy fallback.

Times the two hot operations of a training step (categorical rollout
sampling and weighted score-gradient accumulation) plus a full training run,
and verifies that both backends produce bitwise-identical outputs.

Usage: python benchmarks/bench_step.py [--batch 256] [--m 16] [--n 8]
       [--reps 200] [--steps 100]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from curverl.kernels import BACKENDS, compiled_available
from curverl.passrate import DifficultyProfile, make_population, softmax
from curverl.trainer import TrainConfig, run_training
from curverl.weighting import Curve


def time_op(fn, reps: int) -> float:
    best = float("inf")
    for _ in range(3):
        start = time.perf_counter()
        for _ in range(reps):
            fn()
        best = min(best, (time.perf_counter() - start) / reps)
    return best


def bench_kernels(batch: int, m: int, n: int, reps: int) -> None:
    rng = np.random.default_rng(0)
    probs = softmax(rng.standard_normal((batch, m)))
    cum = np.cumsum(probs, axis=1)
    uniforms = rng.random((batch, n))
    coeff = rng.standard_normal((batch, n))

    results = {}
    for name, backend in BACKENDS.items():
        responses = backend.sample_responses(cum, uniforms)
        grads = backend.accumulate_gradients(probs, responses, coeff)
        t_sample = time_op(lambda b=backend: b.sample_responses(cum, uniforms), reps)
        t_accum = time_op(
            lambda b=backend, r=responses: b.accumulate_gradients(probs, r, coeff), reps
        )
        results[name] = (responses, grads, t_sample, t_accum)

    print(f"kernel timings (batch={batch}, m={m}, n={n}, best of 3 x {reps} reps)")
    for name, (_, _, t_sample, t_accum) in results.items():
        print(f"  {name:>8}: sample {t_sample * 1e6:8.1f} us   accumulate {t_accum * 1e6:8.1f} us")
    if "compiled" in results and "python" in results:
        rp, gp = results["python"][:2]
        rc, gc = results["compiled"][:2]
        assert np.array_equal(rp, rc) and np.array_equal(gp, gc), "backends disagree"
        print("  outputs bitwise identical: yes")
        s = results["python"][2] / results["compiled"][2]
        a = results["python"][3] / results["compiled"][3]
        print(f"  speedup: sample x{s:.1f}, accumulate x{a:.1f}")


def bench_training(batch: int, n: int, steps: int) -> None:
    pop = make_population(
        200, m=16, seed=0,
        profile=DifficultyProfile(kind="beta", alpha=1.0, beta=4.0, unsolvable_fraction=0.1),
    )
    print(f"full training run ({steps} steps, batch={batch}, n={n})")
    outputs = {}
    for name in BACKENDS:
        cfg = TrainConfig(steps=steps, scheme=Curve(), batch_size=batch, n_rollouts=n,
                          t0=10, learning_rate=8.0, seed=1, backend=name)
        start = time.perf_counter()
        outputs[name] = run_training(pop, cfg)
        print(f"  {name:>8}: {time.perf_counter() - start:6.2f} s")
    if len(outputs) == 2:
        a, b = outputs["python"], outputs["compiled"]
        assert np.array_equal(a.theta, b.theta), "training results disagree"
        print("  final parameters bitwise identical: yes")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--batch", type=int, default=256)
    parser.add_argument("--m", type=int, default=16)
    parser.add_argument("--n", type=int, default=8)
    parser.add_argument("--reps", type=int, default=200)
    parser.add_argument("--steps", type=int, default=100)
    args = parser.parse_args()

    if not compiled_available():
        print("compiled extension not built; timing the numpy fallback only")
    bench_kernels(args.batch, args.m, args.n, args.reps)
    bench_training(args.batch, args.n, args.steps)


if __name__ == "__main__":
    main()
