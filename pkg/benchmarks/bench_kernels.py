"""Compare the numba and numpy kernel backends.

Times each sparse kernel on a random matrix and then a short CAVI fit end to
end. The first numba call (JIT compile) is excluded. Run:

    python3 benchmarks/bench_kernels.py --users 2000 --items 1500 --density 0.02 --k 20
"""

import argparse
import time

import numpy as np

from nbmf import kernels
from nbmf.cavi import CAVIConfig, fit_cavi
from nbmf.core import SparseCountMatrix


def random_problem(U, I, density, K, seed):
    rng = np.random.default_rng(seed)
    nnz = max(1, int(U * I * density))
    flat = rng.choice(U * I, size=nnz, replace=False)
    Y = SparseCountMatrix(U, I, flat // I, flat % I, rng.geometric(0.3, size=nnz))
    A = rng.gamma(1.0, size=(U, K))
    B = rng.gamma(1.0, size=(I, K))
    return Y, A, B


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        tic = time.perf_counter()
        fn()
        times.append(time.perf_counter() - tic)
    return min(times)


def bench_kernels(Y, A, B, repeat):
    phi = kernels.get("numpy").compute_phi(Y.rows, Y.cols, np.log(A), np.log(B))
    y = Y.values
    calls = {
        "sparse_dot": lambda m: m.sparse_dot(Y.rows, Y.cols, A, B),
        "scatter_rows": lambda m: m.scatter_rows(Y.rows, Y.cols, y, B, Y.n_users),
        "scatter_add": lambda m: m.scatter_add(Y.rows, y, phi, Y.n_users),
        "compute_phi": lambda m: m.compute_phi(Y.rows, Y.cols, np.log(A), np.log(B)),
        "allocation_term": lambda m: m.allocation_term(Y.rows, Y.cols, y, phi, np.log(A), np.log(B)),
    }
    results = {}
    for name, call in calls.items():
        for backend in kernels.available_backends():
            module = kernels.get(backend)
            call(module)  # warm-up / compile
            results[name, backend] = best_of(lambda: call(module), repeat)
    return results


def bench_fit(Y, K, iters):
    results = {}
    config = CAVIConfig(K=K, max_iters=iters, rel_tol=1e-12)
    for backend in kernels.available_backends():
        kernels.use(backend)
        fit_cavi(Y, CAVIConfig(K=K, max_iters=1))
        tic = time.perf_counter()
        _, trace = fit_cavi(Y, config)
        results[backend] = (time.perf_counter() - tic, trace.objective[-1])
    return results


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--users", type=int, default=2000)
    parser.add_argument("--items", type=int, default=1500)
    parser.add_argument("--density", type=float, default=0.02)
    parser.add_argument("--k", type=int, default=20)
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--fit-iters", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    Y, A, B = random_problem(args.users, args.items, args.density, args.k, args.seed)
    backends = kernels.available_backends()
    print(f"{Y.n_users} x {Y.n_items}, nnz={Y.nnz}, K={args.k}; backends: {', '.join(backends)}")
    if "numba" not in backends:
        print("numba is not installed; only the numpy backend is timed")

    results = bench_kernels(Y, A, B, args.repeat)
    print(f"{'kernel':<18}" + "".join(f"{b:>12}" for b in backends) + "     speedup")
    for name in kernels.KERNELS:
        row = [results[name, b] for b in backends]
        speed = f"{results[name, 'numpy'] / results[name, 'numba']:10.1f}x" if "numba" in backends else ""
        print(f"{name:<18}" + "".join(f"{t * 1e3:10.2f}ms" for t in row) + speed)

    start = kernels.backend
    fits = bench_fit(Y, args.k, args.fit_iters)
    kernels.use(start)
    for b, (seconds, elbo) in fits.items():
        print(f"CAVI {args.fit_iters} sweeps [{b}]: {seconds:.3f} s, final ELBO {elbo:.10g}")


if __name__ == "__main__":
    main()
