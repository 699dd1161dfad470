"""Timing comparison of the two kernel backends on the GP hot path.

Runs every exported kernel function at a few dataset sizes against both the
JIT-compiled and the pure-vectorized implementation, prints per-call times
and the speedup, and cross-checks that the backends agree numerically.

    python3 benchmarks/bench_kernels.py [--sizes 64,256,1024] [--dims 4]
                                        [--repeats 5] [--queries 512]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from bibo import _kernels_numpy

try:
    from bibo import _kernels_numba
except ImportError:
    _kernels_numba = None


def make_problem(n: int, d: int, queries: int, rng: np.random.Generator):
    X = rng.random((n, d))
    Xq = rng.random((queries, d))
    y = rng.normal(size=n)
    ls = rng.uniform(0.2, 1.5, size=d)
    sig = 1.3
    diag = 1e-4
    L, ok = _kernels_numpy.factorize(X, ls, sig, diag)
    assert ok
    alpha = _kernels_numpy.solve_chol(L, y)
    return {"X": X, "Xq": Xq, "y": y, "ls": ls, "sig": sig, "diag": diag,
            "L": L, "alpha": alpha}


def calls(mod, p):
    return {
        "matern52": lambda: mod.matern52(p["X"], p["X"], p["ls"], p["sig"]),
        "factorize": lambda: mod.factorize(p["X"], p["ls"], p["sig"], p["diag"]),
        "lml": lambda: mod.lml(p["X"], p["y"], p["ls"], p["sig"], p["diag"]),
        "solve_chol": lambda: mod.solve_chol(p["L"], p["y"]),
        "cross_predict": lambda: mod.cross_predict(
            p["L"], p["alpha"], p["X"], p["Xq"], p["ls"], p["sig"]
        ),
    }


def best_of(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def check_agreement(p) -> float:
    """Max elementwise discrepancy between backends across all functions."""
    worst = 0.0
    for name in ("matern52", "lml", "solve_chol", "cross_predict"):
        a = calls(_kernels_numpy, p)[name]()
        b = calls(_kernels_numba, p)[name]()
        if name == "lml":
            worst = max(worst, abs(a - b))
        elif name == "cross_predict":
            worst = max(worst, float(np.max(np.abs(a[0] - b[0]))),
                        float(np.max(np.abs(a[1] - b[1]))))
        else:
            worst = max(worst, float(np.max(np.abs(a - b))))
    la, oka = _kernels_numpy.factorize(p["X"], p["ls"], p["sig"], p["diag"])
    lb, okb = _kernels_numba.factorize(p["X"], p["ls"], p["sig"], p["diag"])
    assert oka and okb
    worst = max(worst, float(np.max(np.abs(la - lb))))
    return worst


def fmt(seconds: float) -> str:
    if seconds < 1e-3:
        return f"{seconds * 1e6:8.1f} us"
    if seconds < 1.0:
        return f"{seconds * 1e3:8.2f} ms"
    return f"{seconds:8.2f} s "


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", default="64,256,1024")
    parser.add_argument("--dims", type=int, default=4)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--queries", type=int, default=512)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    if _kernels_numba is None:
        print("JIT backend unavailable (numba not importable); nothing to compare.")
        return 1
    sizes = [int(s) for s in args.sizes.split(",")]
    rng = np.random.default_rng(args.seed)

    # compile outside the timed region
    warm = make_problem(8, args.dims, 4, rng)
    for fn in calls(_kernels_numba, warm).values():
        fn()

    header = f"{'function':14} {'n':>6}  {'numpy':>12} {'numba':>12} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for n in sizes:
        p = make_problem(n, args.dims, args.queries, rng)
        agreement = check_agreement(p)
        for name in ("matern52", "factorize", "lml", "solve_chol", "cross_predict"):
            t_np = best_of(calls(_kernels_numpy, p)[name], args.repeats)
            t_nb = best_of(calls(_kernels_numba, p)[name], args.repeats)
            print(f"{name:14} {n:>6}  {fmt(t_np)} {fmt(t_nb)} {t_np / t_nb:>7.2f}x")
        print(f"{'(max |diff|':14} {n:>6}  across backends: {agreement:.2e})")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
