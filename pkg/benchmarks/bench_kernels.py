"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--m 16] [--repeat 5]

The first numba call (compilation) is excluded. Results are also checked for
agreement so a fast but wrong kernel shows up here.
"""

import argparse
import time

import numpy as np

from ekreduce import _kernels as K


def best_of(func, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = func()
        times.append(time.perf_counter() - t)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--m", type=int, default=16, help="points per axis of the 4D grid")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    m, d = args.m, 4
    h = 2 * np.pi / m
    u = rng.normal(size=m**d)
    coef = rng.normal(size=(m**d, d, d))
    lam = rng.normal(size=(200_000, 6))
    idx = np.stack(np.unravel_index(np.arange(m**d), (m,) * d), axis=-1)
    pairs = rng.integers(0, m**d, size=(200_000, 2))

    cases = {
        "hessian_stencil": (
            lambda: K._hessian_numba(u, m, d, h, 0, u.size),
            lambda: K._hessian_numpy(u, m, d, h),
        ),
        "apply_stencil_operator": (
            lambda: K._apply_numba(u, coef, m, d, h),
            lambda: K._apply_numpy(u, coef, m, d, h),
        ),
        "elementary_symmetric": (
            lambda: K._esym_numba(lam),
            lambda: K._esym_numpy(lam),
        ),
        "holder_pair_max": (
            lambda: K._holder_numba(u, idx, pairs, m, h, 0.5),
            lambda: K._holder_numpy(u, idx, pairs, m, h, 0.5),
        ),
    }
    print(f"grid {m}^{d} = {m**d} points, best of {args.repeat}")
    print(f"{'kernel':<24}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}{'max diff':>12}")
    for name, (fast, slow) in cases.items():
        fast()  # compile
        t_fast, a = best_of(fast, args.repeat)
        t_slow, b = best_of(slow, args.repeat)
        diff = float(np.max(np.abs(np.asarray(a) - np.asarray(b))))
        print(f"{name:<24}{t_fast:>12.4f}{t_slow:>12.4f}{t_slow / t_fast:>10.1f}{diff:>12.2e}")


if __name__ == "__main__":
    main()
