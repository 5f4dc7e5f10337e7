"""Benchmark: compiled vs pure Python quantile-regression kernel.

The simplex kernel dominates Monte Carlo runtime (every replication
fits one quantile-regression path per cluster or cluster pair), so the
package ships a Cython version with a pure Python fallback.  This
script times both on the workloads the studies actually generate and
prints the speedup.

Usage: python benchmarks/benchmark_qr.py [--repeats N]
"""

import argparse
import time

import numpy as np

from crk import _qrpath_py

try:
    from crk import _qrpath as _compiled
except ImportError:
    _compiled = None

TAUS = np.arange(1, 10) / 10.0


def workload(rng, n, p):
    x = rng.normal(size=n)
    z = x**2 / 3.0
    cols = [np.ones(n), x, z][:p]
    X = np.column_stack(cols)
    y = rng.normal(size=n) * (1.0 + z)
    return y, X


def time_kernel(kernel, cases, repeats):
    out = np.empty((TAUS.size, 3))
    best = np.inf
    for _ in range(repeats):
        start = time.perf_counter()
        for y, X in cases:
            kernel.qr_path_into(y, X, TAUS, out[:, : X.shape[1]])
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    print(f"{'workload':<28} {'python':>10} {'compiled':>10} {'speedup':>8}")
    for n, p, fits, label in (
        (100, 3, 20, "within cluster (K=10)"),
        (200, 3, 20, "within cluster (K=20)"),
        (400, 3, 36, "between pair (K=20)"),
        (1000, 3, 10, "large cluster"),
    ):
        cases = [workload(rng, n, p) for _ in range(fits)]
        cases = [
            (np.ascontiguousarray(y), np.ascontiguousarray(X)) for y, X in cases
        ]
        t_py = time_kernel(_qrpath_py, cases, args.repeats)
        name = f"{label} n={n} x{fits}"
        if _compiled is None:
            print(f"{name:<28} {t_py * 1e3:>9.1f}ms {'n/a':>10} {'':>8}")
            continue
        t_cy = time_kernel(_compiled, cases, args.repeats)
        print(
            f"{name:<28} {t_py * 1e3:>9.1f}ms {t_cy * 1e3:>9.1f}ms "
            f"{t_py / t_cy:>7.1f}x"
        )
    if _compiled is None:
        print("\ncompiled kernel not built; showing pure Python timings only")


if __name__ == "__main__":
    main()
