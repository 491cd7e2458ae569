"""Time the two hot kernels on both backends and check they agree.

Run from the repository root:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --sizes 64,256 --repeats 30

The JIT path is warmed before timing so compilation cost never pollutes the
numbers. When numba is not importable (or CLAPADAPT_NO_NUMBA is set) the
script still runs and reports the numpy column alone.
"""

import argparse
import time

import numpy as np

from clapadapt.kernels import (
    HAS_NUMBA,
    active_backend,
    rbf_gram,
    set_backend,
    smo_solve,
    supcon_value_grad,
)
from clapadapt.veccore import Rng


def supcon_problem(n, d, seed):
    rng = Rng(seed)
    V = rng.normal(n * d).reshape(n, d)
    y = (rng.split("y").uniform(n) > 0.5).astype(np.int64)
    y[0] = y[1]  # at least one positive pair, as the kernel contract requires
    return V, y


def smo_problem(n, d, seed):
    rng = Rng(seed)
    X = rng.normal(n * d).reshape(n, d)
    y = np.where(rng.split("y").uniform(n) > 0.5, 1.0, -1.0)
    X[y > 0, 0] += 2.0  # make the problem non-trivial but solvable
    K = rbf_gram(X, gamma=1.0 / d)
    pool = rng.split("pool").uniform(4096)
    return K, y, pool


def timed(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_backend(backend, sizes, repeats):
    prev = set_backend(backend)
    rows = []
    try:
        for n in sizes:
            V, ylab = supcon_problem(n, 128, seed=n)
            supcon_value_grad(V, ylab, 0.07, True, True)  # warm the JIT
            t, (loss, grad) = timed(
                lambda: supcon_value_grad(V, ylab, 0.07, True, True), repeats)
            rows.append((f"supcon n={n} d=128", t, float(loss),
                         float(np.abs(grad).sum())))

            K, ysvm, pool = smo_problem(n, 16, seed=n + 1)
            smo_solve(K, ysvm, 1.0, 1e-3, 200, pool)
            t, (alphas, bias, passes, _conv) = timed(
                lambda: smo_solve(K, ysvm, 1.0, 1e-3, 200, pool), repeats)
            rows.append((f"smo    n={n} d=16", t, float(bias),
                         float(alphas.sum())))
    finally:
        set_backend(prev)
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", default="32,128,512",
                        help="comma list of problem sizes (default: 32,128,512)")
    parser.add_argument("--repeats", type=int, default=20,
                        help="timing repeats, best-of (default: 20)")
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    backends = ["numpy"] + (["numba"] if HAS_NUMBA else [])
    print(f"backends: {', '.join(backends)} (active default: {active_backend()})")
    results = {b: bench_backend(b, sizes, args.repeats) for b in backends}

    header = f"{'kernel':<22}" + "".join(f"{b + ' (ms)':>14}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}{'max |diff|':>12}"
    print(header)
    print("-" * len(header))
    for i, (name, t_np, *vals_np) in enumerate(results["numpy"]):
        line = f"{name:<22}{t_np * 1e3:>14.3f}"
        if len(backends) == 2:
            _, t_nb, *vals_nb = results["numba"][i]
            diff = max(abs(a - b) for a, b in zip(vals_np, vals_nb))
            line += f"{t_nb * 1e3:>14.3f}{t_np / t_nb:>10.2f}{diff:>12.2e}"
        print(line)

    if len(backends) == 2:
        worst = max(
            max(abs(a - b) for a, b in zip(r_np[2:], r_nb[2:]))
            for r_np, r_nb in zip(results["numpy"], results["numba"])
        )
        print(f"\nbackend agreement: max |diff| over all checks = {worst:.2e}")
        if worst > 1e-9:
            raise SystemExit("backends disagree beyond float64 round-off")


if __name__ == "__main__":
    main()
