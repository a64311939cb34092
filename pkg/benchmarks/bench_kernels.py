#!/usr/bin/env python3
"""Time the numba kernels against their pure-numpy twins.

Usage: python3 benchmarks/bench_kernels.py [--rows 200000] [--K 5] [--runs 5] [--json out.json]
"""
import argparse
import json
import time

import numpy as np

from ordinalkit import _kernels
from ordinalkit.simplex import random_simplex

KERNEL_NAMES = {_kernels.CE: "CE", _kernels.OLL: "OLL", _kernels.SOFT: "SOFT",
                _kernels.EMD: "EMD", _kernels.MLL: "MLL"}


def best_of(fn, runs):
    fn()  # warm-up, includes JIT compilation
    times = []
    for _ in range(runs):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--rows", type=int, default=200_000)
    parser.add_argument("--K", type=int, default=5)
    parser.add_argument("--runs", type=int, default=5)
    parser.add_argument("--starts", type=int, default=22, help="restarts for the simplex solver")
    parser.add_argument("--json", default=None)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    P = random_simplex(rng, args.rows, args.K) * 0.98 + 0.02 / args.K
    y = rng.integers(0, args.K, size=args.rows)
    results = []

    for code, name in KERNEL_NAMES.items():
        t_np = best_of(lambda: _kernels.np_loss_grad_rows(code, P, y, 1.5, 1.0, 0.5), args.runs)
        t_nb = best_of(lambda: _kernels.nb_loss_grad_rows(code, P, y, 1.5, 1.0, 0.5), args.runs)
        results.append({"kernel": f"loss_grad[{name}]", "numpy_s": t_np, "numba_s": t_nb})

    t_np = best_of(lambda: _kernels.np_unimodal_rows(P), args.runs)
    t_nb = best_of(lambda: _kernels.nb_unimodal_rows(P), args.runs)
    results.append({"kernel": "unimodal_rows", "numpy_s": t_np, "numba_s": t_nb})

    starts = random_simplex(rng, args.starts, args.K) * 0.99 + 0.01 / args.K
    for code, name in ((_kernels.OLL, "OLL"), (_kernels.SOFT, "SOFT")):
        solve = lambda impl: impl(code, starts, 0, 1.5, 1.0, 0.5, 20000, 1e-12)
        t_np = best_of(lambda: solve(_kernels.np_eg_minimize), max(1, args.runs // 2))
        t_nb = best_of(lambda: solve(_kernels.nb_eg_minimize), max(1, args.runs // 2))
        results.append({"kernel": f"eg_minimize[{name}]", "numpy_s": t_np, "numba_s": t_nb})

    print(f"{'kernel':<22}{'numpy (ms)':>12}{'numba (ms)':>12}{'speedup':>10}")
    for r in results:
        r["speedup"] = r["numpy_s"] / r["numba_s"]
        print(f"{r['kernel']:<22}{1e3 * r['numpy_s']:>12.2f}{1e3 * r['numba_s']:>12.2f}{r['speedup']:>9.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"rows": args.rows, "K": args.K, "results": results}, fh, indent=2)


if __name__ == "__main__":
    main()
