"""Time the compiled kernels against the NumPy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from wienersc import _kernels_py as py

try:
    from wienersc import _kernels as cy
except ImportError:  # extension not built: report the fallback only
    cy = None


def cases(rng):
    x = rng.standard_normal(38 * 48) * 20
    params = (15.0, 0.8, 0.1, 12.0)
    scales = x.std() * np.logspace(-1, 1, 25)
    lambdas = np.linspace(-2, 3, 41)
    K = 29
    A = rng.standard_normal((K, K))
    L = np.linalg.cholesky(A @ A.T + K * np.eye(K))
    base, z_obs = rng.standard_normal(K), rng.standard_normal(K)
    grid = np.linspace(-1, 1, 201)
    return {
        "pipeline_forward (1824 pts)": lambda m: m.pipeline_forward(x, *params),
        "pipeline_inverse (1824 pts)": lambda m: m.pipeline_inverse(x / 20, *params),
        "pipeline_log_jacobian (1824 pts)": lambda m: m.pipeline_log_jacobian(x, *params),
        "profile_nll (1824 pts)": lambda m: m.profile_nll(x, 15.0, 0.8),
        "profile_nll_grid (25x41)": lambda m: m.profile_nll_grid(x, scales, lambdas),
        "grid_quadform (201x201, K=29)": lambda m: m.grid_quadform(base, grid, grid / 30, z_obs,
                                                                    L, *params),
    }


def best_of(fn, repeat):
    number = 1
    while timeit.timeit(fn, number=number) < 0.05:
        number *= 2
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':32s} {'python [ms]':>12s} {'cython [ms]':>12s} {'speedup':>8s}")
    for name, call in cases(rng).items():
        t_py = best_of(lambda: call(py), args.repeat) * 1e3
        if cy is None:
            print(f"{name:32s} {t_py:12.3f} {'n/a':>12s} {'n/a':>8s}")
            continue
        t_cy = best_of(lambda: call(cy), args.repeat) * 1e3
        print(f"{name:32s} {t_py:12.3f} {t_cy:12.3f} {t_py / t_cy:7.1f}x")


if __name__ == "__main__":
    main()
