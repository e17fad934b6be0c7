"""Compiled vs pure-Python kernels: wall time and output equality.

    python3 benchmarks/bench_kernels.py [--trials N] [--repeat R]

The Python twin is timed on a smaller workload and reported per unit of work,
since it is much slower.
"""

import argparse
import math
import time

import numpy as np

from onoff_qcd.kernels import get_backend

# Table II, third row: theta=0.75, rho=0.01, a=9, b=-2
THETA, RHO, A, B = 0.75, 0.01, 9.0, -2.0
CAP = 50_000


def _gen(seed):
    return np.random.Generator(np.random.PCG64(seed))


def workloads(n):
    wall = 50.0 * (0.5 * THETA ** 2 - math.log1p(-RHO))
    return {
        "simulate_trials": lambda k, g: k.simulate_trials(g, n, THETA, RHO, 0.0, -math.inf, A, B,
                                                          1.0, 0, CAP, -1),
        "overshoot": lambda k, g: k.overshoot(g, 10 * n, THETA, RHO, wall),
        "eta_samples": lambda k, g: k.eta_samples(g, n, THETA, RHO, -math.inf, 1_400, 35.0),
        "exit_paths": lambda k, g: k.exit_paths(g, 10 * n, THETA, False, RHO, B, B, math.inf, CAP),
    }


def timed(fn, kern, seed, repeat):
    best = math.inf
    out = None
    for _ in range(repeat):
        g = _gen(seed)
        t0 = time.perf_counter()
        out = fn(kern, g)
        best = min(best, time.perf_counter() - t0)
    return best, out


def same(x, y):
    if isinstance(x, tuple):
        return all(same(a, b) for a, b in zip(x, y))
    return np.array_equal(np.asarray(x), np.asarray(y))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--trials", type=int, default=20_000)
    ap.add_argument("--python-trials", type=int, default=500)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    try:
        cy = get_backend("cython")
    except ImportError:
        print("compiled backend not built; nothing to compare")
        return
    py = get_backend("python")
    big, small = workloads(args.trials), workloads(args.python_trials)
    print(f"{'kernel':16s} {'cython s':>10s} {'python s':>10s} {'speedup':>9s} identical")
    for name in big:
        t_cy, _ = timed(big[name], cy, 1, args.repeat)
        t_cy_small, out_cy = timed(small[name], cy, 2, args.repeat)
        t_py, out_py = timed(small[name], py, 2, 1)
        scale = args.trials / args.python_trials
        print(f"{name:16s} {t_cy:10.3f} {t_py * scale:10.1f} {t_py / t_cy_small:8.0f}x "
              f"{same(out_cy, out_py)}")
    print("python column extrapolated linearly from", args.python_trials, "trials")


if __name__ == "__main__":
    main()
