"""Benchmark the numba advection kernels against the numpy fallback.

Run:  python3 benchmarks/bench_kernels.py [--n 96] [--reps 5]
The numba path includes a warm-up call so JIT compilation is not timed.
"""

import argparse
import time

import numpy as np

from brinkflow.kernels import numba_backend, numpy_backend

try:
    numba_backend.upwind_density  # force import errors to surface here
    HAVE_NUMBA = True
except AttributeError:
    HAVE_NUMBA = False


def make_fields(n, seed=0):
    rng = np.random.default_rng(seed)
    rho = rng.random((n, n, n)) + 1.0
    us = [rng.standard_normal((n + (a == 0), n + (a == 1), n + (a == 2)))
          for a in range(3)]
    for a in range(3):  # no-slip walls so the CFL bound is the only limit
        sl = [slice(None)] * 3
        sl[a] = (0, -1)
        us[a][tuple(sl)] = 0.0
    return rho, us


def time_fn(fn, reps):
    best = np.inf
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=96)
    ap.add_argument("--reps", type=int, default=5)
    args = ap.parse_args()
    n, reps = args.n, args.reps
    h = 1.0 / n
    rho, us = make_fields(n)
    speed = max(np.abs(u).max() for u in us)
    dt = 0.4 * h / speed
    m = us[0].copy()

    print(f"grid {n}^3, {reps} reps, best-of timings")
    header = f"{'kernel':<22}{'numpy':>12}{'numba':>12}{'speedup':>10}"
    print(header)
    print("-" * len(header))

    cases = [("upwind_density",
              lambda be: be.upwind_density(rho, *us, h, dt))]
    for ax in range(3):
        cases.append((f"advect_momentum[{ax}]",
                      lambda be, ax=ax: be.advect_momentum(
                          ax, *us, us[ax].copy(), h)))

    for name, call in cases:
        t_np = time_fn(lambda: call(numpy_backend), reps)
        if HAVE_NUMBA:
            call(numba_backend)  # warm-up / JIT
            t_nb = time_fn(lambda: call(numba_backend), reps)
            same = np.array_equal(call(numpy_backend), call(numba_backend))
            flag = "" if same else "  MISMATCH"
            print(f"{name:<22}{t_np * 1e3:>10.2f}ms{t_nb * 1e3:>10.2f}ms"
                  f"{t_np / t_nb:>9.2f}x{flag}")
        else:
            print(f"{name:<22}{t_np * 1e3:>10.2f}ms{'n/a':>12}{'n/a':>10}")


if __name__ == "__main__":
    main()
