"""Benchmark the compiled assignment kernel against the numpy fallback.

Usage: python3 benchmarks/bench_assignment.py [--sizes 100,200,400,800]
"""

import argparse
import time

import numpy as np

from otmatch.assignment import available_backends


def bench_one(solve, cost, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        solve(cost.copy())
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="100,200,400,800")
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]
    backends = available_backends()
    rng = np.random.default_rng(args.seed)

    header = ["n"] + list(backends)
    if len(backends) > 1:
        header.append("speedup")
    print(",".join(header))
    for n in sizes:
        cost = rng.normal(size=(n, n))
        results = {}
        for name, solve in backends.items():
            results[name] = bench_one(solve, cost, args.repeats)
        perms = {name: solve(cost.copy())[0] for name, solve in backends.items()}
        first = next(iter(perms.values()))
        for name, perm in perms.items():
            assert np.array_equal(perm, first), f"backend {name} disagrees at n={n}"
        row = [str(n)] + [f"{results[k]:.4f}" for k in backends]
        if "cython" in results and "python" in results:
            row.append(f"{results['python'] / results['cython']:.1f}x")
        print(",".join(row))


if __name__ == "__main__":
    main()
