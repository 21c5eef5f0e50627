"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from mixbound import _kernels_py as py

try:
    from mixbound import _kernels as cy
except ImportError:  # pragma: no cover
    cy = None


def cases(n_path, n_gram):
    rng = np.random.default_rng(0)
    P = rng.dirichlet(np.ones(3), size=3)
    cum = np.cumsum(P, axis=1)
    cum[:, -1] = 1.0
    cum = np.ascontiguousarray(cum)
    u = rng.random(n_path)
    x = rng.uniform(0, 1, (n_gram, 1))
    G = np.ascontiguousarray(np.exp(-2.0 * (x - x.T) ** 2))
    t = np.where(rng.random(n_gram) < 0.5, -1.0, 1.0)
    y = rng.uniform(0, 1, n_gram)
    C = 1.0 / (2 * 0.1 * n_gram)

    def path(mod):
        return lambda: mod.sample_path(cum, 0, u)

    def svm(mod):
        def run():
            alpha, f = np.zeros(n_gram), np.zeros(n_gram)
            for _ in range(5):
                mod.svm_sweep(G, t, C, alpha, f)
        return run

    def svr(mod):
        def run():
            beta, f = np.zeros(n_gram), np.zeros(n_gram)
            for _ in range(5):
                mod.svr_sweep(G, y, C, 0.05, beta, f)
        return run

    return [(f"sample_path ({n_path} steps)", path),
            (f"svm_sweep x5 (m={n_gram})", svm),
            (f"svr_sweep x5 (m={n_gram})", svr)]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--path-length", type=int, default=100_000)
    parser.add_argument("--m", type=int, default=400)
    args = parser.parse_args()
    if cy is None:
        print("compiled extension not built; only the fallback is available")
    print(f"{'kernel':<32}{'python (s)':>12}{'cython (s)':>12}{'speedup':>10}")
    for name, make in cases(args.path_length, args.m):
        t_py = min(timeit.repeat(make(py), number=1, repeat=args.repeat))
        if cy is None:
            print(f"{name:<32}{t_py:>12.4f}{'-':>12}{'-':>10}")
            continue
        t_cy = min(timeit.repeat(make(cy), number=1, repeat=args.repeat))
        print(f"{name:<32}{t_py:>12.4f}{t_cy:>12.5f}{t_py / t_cy:>9.0f}x")


if __name__ == "__main__":
    main()
