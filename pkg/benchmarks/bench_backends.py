"""Benchmark the numba kernels against the pure-numpy fallback.

Runs the three hot kernels (neighbourhood moments, PFH pair histograms,
SVM decision values) through both backends on an identical synthetic scene,
reporting the best-of-N wall time, the speedup, and a numerical consistency
check.  Histogram counts are integers and must match exactly; the float
kernels are allowed rounding-order differences near machine epsilon.

Usage: python3 benchmarks/bench_backends.py [--body 5000] [--repeats 3]
"""

import argparse
import time

import numpy as np

from peduncleseg import (NormalParams, SceneSpec, build_index,
                         estimate_normals, generate_scene)
from peduncleseg import _kernels


def best_time(fn, repeats):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - start)
    return result, min(times)


def compare(name, run, numba_impl, numpy_impl, repeats, exact=False):
    run(numba_impl)   # JIT warmup outside the timed region
    got_nb, t_nb = best_time(lambda: run(numba_impl), repeats)
    got_np, t_np = best_time(lambda: run(numpy_impl), repeats)

    diff = max(float(np.abs(np.asarray(a, dtype=np.float64)
                            - np.asarray(b, dtype=np.float64)).max())
               for a, b in zip(got_nb, got_np))
    if exact:
        consistent = "exact" if diff == 0.0 else f"MISMATCH {diff:.2e}"
    else:
        consistent = f"max diff {diff:.2e}"
    print(f"{name:<22} numba {t_nb:8.4f} s   numpy {t_np:8.4f} s   "
          f"speedup {t_np / t_nb:5.2f}x   {consistent}")
    return t_nb, t_np


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--body", type=int, default=5000,
                        help="body points in the benchmark scene")
    parser.add_argument("--peduncle", type=int, default=1000,
                        help="peduncle points in the benchmark scene")
    parser.add_argument("--rows", type=int, default=50000,
                        help="prediction rows for the decision kernel")
    parser.add_argument("--svs", type=int, default=1000,
                        help="support vectors for the decision kernel")
    parser.add_argument("--radius", type=float, default=0.01,
                        help="neighbourhood radius for moments and PFH")
    parser.add_argument("--repeats", type=int, default=3,
                        help="timed repetitions; best time wins")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    if not _kernels.HAVE_NUMBA:
        parser.exit(1, "numba is not importable; nothing to compare "
                       "(the package still runs on the numpy fallback)\n")

    cloud = generate_scene(SceneSpec(points_body=args.body,
                                     points_peduncle=args.peduncle,
                                     seed=args.seed))
    index = build_index(cloud)
    nbr_idx, nbr_off = index.radius_neighbors_csr(args.radius)
    normals = estimate_normals(cloud, index,
                               NormalParams(radius_rn=args.radius))
    queries = np.arange(len(cloud), dtype=np.int64)
    pairs = int(sum(c * (c - 1) // 2 for c in np.diff(nbr_off)))

    rng = np.random.default_rng(args.seed)
    x = rng.normal(size=(args.rows, 36))
    sv = rng.normal(size=(args.svs, 36))
    coef = rng.normal(size=args.svs)

    print(f"scene: {len(cloud)} points, radius {args.radius} m, "
          f"{pairs} PFH pairs; decision: {args.rows} rows x {args.svs} SVs")
    print(f"best of {args.repeats} runs per backend\n")

    compare("neighborhood_moments",
            lambda impl: _kernels.neighborhood_moments(
                cloud.xyz, nbr_idx, nbr_off, impl=impl),
            _kernels._neighborhood_moments_numba,
            _kernels._neighborhood_moments_numpy, args.repeats)
    compare("pfh_pair_histograms",
            lambda impl: _kernels.pfh_pair_histograms(
                cloud.xyz, normals.normals, normals.valid,
                nbr_idx, nbr_off, queries, impl=impl),
            _kernels._pfh_histograms_numba,
            _kernels._pfh_histograms_numpy, args.repeats, exact=True)
    compare("decision_values (rbf)",
            lambda impl: (_kernels.decision_values(
                x, sv, coef, 0.1, _kernels.KERNEL_RBF, 0.1, impl=impl),),
            _kernels._decision_values_numba,
            _kernels._decision_values_numpy, args.repeats)


if __name__ == "__main__":
    main()
