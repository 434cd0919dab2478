"""Time the numba kernels against their numpy twins.

    python benchmarks/bench_kernels.py [--repeat N] [--machines N]

A random reduced network stands in for the Kron-reduced system; the kernel
calls mirror what one contingency screen does (a fault-on RK4 run, the PE
series along it, a gradient-flow MGP search, and a Newton mismatch batch).
Numba compile time is excluded by one warm-up call.
"""
import argparse
import time

import numpy as np

from switchstab import kernels


def random_system(n, seed=0):
    rng = np.random.default_rng(seed)
    C = rng.uniform(0.5, 3.0, (n, n))
    C = (C + C.T) / 2
    D = rng.uniform(0.0, 0.3, (n, n))
    D = (D + D.T) / 2
    np.fill_diagonal(C, 0)
    np.fill_diagonal(D, 0)
    M = rng.uniform(0.02, 0.2, n)
    # choose P so that a spread of small angles is an equilibrium
    sep = rng.uniform(-0.3, 0.3, n)
    P = -kernels.numpy_backend.mismatch(sep, np.zeros(n), C, D, M)
    return sep, P, C, D, M


def workloads(n):
    sep, P, C, D, M = random_system(n)
    d0 = sep + np.random.default_rng(1).uniform(-0.5, 0.5, n)
    w0 = np.zeros(n)
    deltas = np.random.default_rng(2).uniform(-2, 2, (2000, n))
    return {
        "mismatch x1000": lambda b: [b.mismatch(d0, P, C, D, M) for _ in range(1000)],
        "rk4_swing 2000 steps": lambda b: b.rk4_swing(d0, w0, P, C, D, M, 0.05, 1e-3, 2000),
        "PE series 2000 pts": lambda b: b.potential_energy_series(deltas, d0, P, C, D),
        "gradient_flow to SEP": lambda b: b.gradient_flow(sep + 0.3 * (d0 - sep), P, C, D, M, 1e-3, 5000, 1e-9),
    }


def best_of(fn, backend, repeat):
    fn(backend)  # warm-up (includes JIT compilation)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(backend)
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--machines", type=int, default=10)
    args = ap.parse_args(argv)
    backends = [kernels.numpy_backend] + ([kernels.numba_backend] if kernels.numba_backend else [])
    print(f"{'kernel':<26}" + "".join(f"{b.name:>12}" for b in backends) + ("     speedup" if len(backends) == 2 else ""))
    for name, fn in workloads(args.machines).items():
        t = [best_of(fn, b, args.repeat) for b in backends]
        line = f"{name:<26}" + "".join(f"{x * 1e3:>10.2f}ms" for x in t)
        if len(t) == 2:
            line += f"{t[0] / t[1]:>11.1f}x"
        print(line)


if __name__ == "__main__":
    main()
