"""Benchmark the compiled kernels against the pure-numpy fallback.

Runs each kernel on training-shaped inputs and a full recommender epoch
through both backends, printing a timing table. Usage:

    python benchmarks/bench_kernels.py [--pairs 300000] [--dim 32] [--repeat 5]
"""

import argparse
import time

import numpy as np

from cips.kernels import pyref

try:
    from cips.kernels import _core
    BACKENDS = {"python": pyref, "cython": _core}
except ImportError:
    BACKENDS = {"python": pyref}


def time_call(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def kernel_cases(pairs, dim, clusters, rows, rng):
    z = rng.normal(scale=3.0, size=pairs)
    alpha = rng.random(pairs)
    beta = rng.random(pairs)
    a = rng.normal(size=(pairs, dim))
    b = rng.normal(size=(pairs, dim))
    idx = rng.integers(0, rows, size=pairs)
    h = rng.normal(size=(pairs // 100 + 2, dim))
    centers = rng.normal(size=(clusters, dim))
    dist = pyref.pairwise_distances(h, centers)
    soft = pyref.soft_assign_from_distances(dist, False)
    target = soft**2 / soft.sum(axis=0)
    target /= target.sum(axis=1, keepdims=True)

    def scatter(mod):
        out = np.zeros((rows, dim))
        mod.scatter_add_rows(out, idx, a)

    return {
        "sigmoid": lambda mod: mod.sigmoid(z),
        "bce_terms_and_grad": lambda mod: mod.bce_terms_and_grad(z, alpha, beta),
        "dot_rows": lambda mod: mod.dot_rows(a, b),
        "scatter_add_rows": scatter,
        "pairwise_distances": lambda mod: mod.pairwise_distances(h, centers),
        "kl_grads": lambda mod: mod.kl_grads(h, centers, dist, soft, target, False),
        "adam_update": lambda mod: mod.adam_update(
            a.copy(), b, np.zeros_like(a), np.zeros_like(a),
            1, 0.01, 0.9, 0.999, 1e-8, 0.0,
        ),
    }


def epoch_case(pairs, dim, rows, rng, mod):
    """One mini-batch epoch of the recommender inner loop."""
    users = rng.integers(0, rows, size=pairs)
    items = rng.integers(0, rows, size=pairs)
    labels = rng.integers(0, 2, size=pairs).astype(np.float64)
    user_table = 0.1 * rng.standard_normal((rows, dim))
    item_table = 0.1 * rng.standard_normal((rows, dim))
    alpha = labels / pairs
    beta = (1.0 - labels) / pairs

    def run():
        for start in range(0, pairs, 1024):
            sl = slice(start, start + 1024)
            bu, bv = users[sl], items[sl]
            su, sv = user_table[bu], item_table[bv]
            z = mod.dot_rows(su, sv)
            _, dz = mod.bce_terms_and_grad(z, alpha[sl], beta[sl])
            grad = np.zeros_like(item_table)
            mod.scatter_add_rows(grad, bv, dz[:, None] * su)

    return run


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--pairs", type=int, default=300_000)
    parser.add_argument("--dim", type=int, default=32)
    parser.add_argument("--clusters", type=int, default=8)
    parser.add_argument("--rows", type=int, default=20_000)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    if "cython" not in BACKENDS:
        print("compiled kernels not built; showing python backend only")

    rng = np.random.default_rng(0)
    cases = kernel_cases(args.pairs, args.dim, args.clusters, args.rows, rng)
    header = f"{'kernel':24}" + "".join(f"{name:>12}" for name in BACKENDS)
    if len(BACKENDS) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for name, call in cases.items():
        times = {backend: time_call(lambda m=mod: call(m), args.repeat)
                 for backend, mod in BACKENDS.items()}
        line = f"{name:24}" + "".join(f"{times[b] * 1e3:>10.2f}ms" for b in BACKENDS)
        if len(times) == 2:
            line += f"{times['python'] / times['cython']:>9.1f}x"
        print(line)

    print()
    for backend, mod in BACKENDS.items():
        run = epoch_case(args.pairs, args.dim, args.rows, np.random.default_rng(1), mod)
        elapsed = time_call(run, max(2, args.repeat // 2))
        print(f"recommender epoch ({args.pairs} pairs, batch 1024) "
              f"[{backend}]: {elapsed * 1e3:.1f}ms")


if __name__ == "__main__":
    main()
