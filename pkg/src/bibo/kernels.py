"""Backend dispatch for the GP hot kernels.

Two interchangeable implementations exist: `_kernels_numba` (default, JIT
compiled) and `_kernels_numpy` (vectorized fallback). Selection happens once
at import time: setting the environment variable ``BIBO_NUMBA=0`` forces the
numpy path, as does an unimportable numba. ``benchmarks/bench_kernels.py``
compares the two.

Exported functions (identical contracts in both backends):

- ``matern52(X1, X2, ls, sig)``: Matern 5/2 ARD cross-covariance matrix.
- ``factorize(X, ls, sig, diag)``: lower Cholesky of K + diag*I, with status.
- ``lml(X, y, ls, sig, diag)``: exact Gaussian log marginal likelihood.
- ``solve_chol(L, y)``: solve (L L^T) a = y.
- ``cross_predict(L, alpha, Xtrain, Xq, ls, sig)``: posterior mean/variance.

All array arguments must be C-contiguous float64.
"""

from __future__ import annotations

import os


def _numba_wanted() -> bool:
    return os.environ.get("BIBO_NUMBA", "1").strip().lower() not in ("0", "false", "off", "no")


BACKEND = "numpy"
if _numba_wanted():
    try:
        from bibo._kernels_numba import (  # noqa: F401
            LOG_2PI,
            cross_predict,
            factorize,
            lml,
            matern52,
            solve_chol,
        )

        BACKEND = "numba"
    except ImportError:
        pass

if BACKEND == "numpy":
    from bibo._kernels_numpy import (  # noqa: F401
        LOG_2PI,
        cross_predict,
        factorize,
        lml,
        matern52,
        solve_chol,
    )
