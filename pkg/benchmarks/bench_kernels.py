#!/usr/bin/env python3
"""Benchmark the hot kernels: numba JIT vs the pure-numpy fallback.

Times the accelerated projected-gradient NNLS iteration loop and the Gaussian
collocation fill on a recovery-sized problem (M=7 window, 256x256 grid).
Run with NNSR_NO_NUMBA=1 to confirm the fallback path is the one the package
selects when numba is disabled.

Usage: python benchmarks/bench_kernels.py [--quick]
"""

import argparse
import time

import numpy as np

from nnsr import kernels
from nnsr.imaging import Window, forward
from nnsr.measures import random_separated_measure
from nnsr.solver import Grid


def _time(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--quick", action="store_true", help="smaller problem, fewer reps")
    args = ap.parse_args()

    grid_n = 96 if args.quick else 256
    iters = 100 if args.quick else 300
    reps = 2 if args.quick else 3

    rng = np.random.default_rng(0)
    x = random_separated_measure(3, 0.15, (0.5, 1.5), rng)
    w = Window.gaussian(np.linspace(0, 1, 7), 0.2)
    grid = Grid(grid_n)
    from nnsr.imaging import collocation

    ct = collocation(w, grid.nodes)
    A = np.kron(ct, ct)
    y = forward(w, x).ravel()
    z0 = np.zeros(A.shape[1])
    step = 1.0 / np.linalg.norm(A @ A.T, 2)

    print(f"problem: A is {A.shape[0]}x{A.shape[1]}, {iters} APG iterations")
    print(f"numba available and enabled: {kernels.NUMBA_ENABLED}")

    rows = []
    t_np = _time(lambda: kernels.apg_nnls_numpy(A, y, z0, step, 0.0, iters), reps)
    rows.append(("apg_nnls", "numpy", t_np))
    if kernels.NUMBA_ENABLED:
        kernels.apg_nnls_jit(A, y, z0, step, 0.0, 2)  # compile outside the timer
        t_nb = _time(lambda: kernels.apg_nnls_jit(A, y, z0, step, 0.0, iters), reps)
        rows.append(("apg_nnls", "numba", t_nb))

    ts = np.linspace(0, 1, 200_000)
    t_np = _time(lambda: kernels.gaussian_colloc_numpy(w.centers, w.sigma, ts), reps)
    rows.append(("gaussian_colloc", "numpy", t_np))
    if kernels.NUMBA_ENABLED:
        kernels.gaussian_colloc_jit(w.centers, w.sigma, ts[:8])
        t_nb = _time(lambda: kernels.gaussian_colloc_jit(w.centers, w.sigma, ts), reps)
        rows.append(("gaussian_colloc", "numba", t_nb))

    print(f"\n{'kernel':<18} {'backend':<8} {'best time (s)':>14}")
    for name, backend, t in rows:
        print(f"{name:<18} {backend:<8} {t:>14.4f}")
    by_kernel = {}
    for name, backend, t in rows:
        by_kernel.setdefault(name, {})[backend] = t
    for name, d in by_kernel.items():
        if {"numpy", "numba"} <= d.keys():
            print(f"{name}: numba speedup x{d['numpy'] / d['numba']:.2f}")


if __name__ == "__main__":
    main()
