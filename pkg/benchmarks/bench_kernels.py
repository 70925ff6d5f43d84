"""Time the compiled and numpy split kernels on the same batch.

Usage: python3 benchmarks/bench_kernels.py [--n 200000] [--repeat 5]
Thread count of the compiled backend follows GSPLIT_THREADS.
"""
import argparse
import time

import numpy as np

from gsplit import _kernels_py
from gsplit.scenes import random_model
from gsplit.split import EPS

try:
    from gsplit import _kernels_c
except ImportError:
    _kernels_c = None


def _best(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    m = random_model(args.n, seed=0)
    mu, C, a = m.positions, np.ascontiguousarray(m.covariances()), m.opacity_mass
    rng = np.random.default_rng(1)
    n = rng.normal(size=(args.n, 3))
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    d = rng.normal(size=args.n) * 0.1 - np.einsum("ni,ni->n", n, mu)

    cases = {
        "split_threshold": lambda k: k.split_threshold(m.rotations, m.scales, n),
        "split_moments": lambda k: k.split_moments(mu, C, a, n, d, EPS),
        "halfspace_mass": lambda k: k.halfspace_mass(mu, C, a, n, d),
        "halfspace_moments": lambda k: k.halfspace_moments(mu, C, a, n, d),
    }
    backends = [("numpy", _kernels_py)] + ([("cython", _kernels_c)] if _kernels_c else [])
    print(f"N = {args.n}, best of {args.repeat}")
    print(f"{'kernel':<20}" + "".join(f"{name:>12}" for name, _ in backends) + ("     speedup" if _kernels_c else ""))
    for label, fn in cases.items():
        times = [_best(lambda k=k: fn(k), args.repeat) for _, k in backends]
        row = f"{label:<20}" + "".join(f"{t * 1e3:>10.1f}ms" for t in times)
        if len(times) == 2:
            row += f"{times[0] / times[1]:>11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
