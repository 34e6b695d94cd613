"""Hot numeric loops, JIT-compiled with numba when available.

Set ``NNSR_NO_NUMBA=1`` in the environment to force the pure-numpy fallback
implementations.  ``benchmarks/bench_kernels.py`` times both paths.
"""

from __future__ import annotations

import os

import numpy as np

NUMBA_ENABLED = os.environ.get("NNSR_NO_NUMBA", "0") != "1"
if NUMBA_ENABLED:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False

__all__ = [
    "NUMBA_ENABLED",
    "apg_nnls",
    "apg_nnls_numpy",
    "apg_nnls_jit",
    "gaussian_colloc",
    "gaussian_colloc_numpy",
    "gaussian_colloc_jit",
]


def _apg_nnls_impl(A, y, z0, step, tol, max_iter):
    """Monotone accelerated projected gradient for min 0.5*||A z - y||^2, z >= 0.

    Returns (z, objectives, n_iters, pg_norm).  The recorded objective
    sequence is nonincreasing by construction (candidate steps that would
    increase the objective are rejected and momentum restarts).
    """
    z = np.maximum(z0, 0.0)
    r = np.dot(A, z) - y
    obj = 0.5 * np.dot(r, r)
    objs = np.empty(max_iter + 1)
    objs[0] = obj
    v = z.copy()
    z_prev = z.copy()
    t_mom = 1.0
    pg = np.inf
    n = 0
    for it in range(max_iter):
        g = np.dot(A.T, (np.dot(A, v) - y))
        cand = np.maximum(v - step * g, 0.0)
        rc = np.dot(A, cand) - y
        obj_c = 0.5 * np.dot(rc, rc)
        if obj_c <= obj:
            z_new = cand
            obj_new = obj_c
            restart = False
        else:
            # candidate increased the objective: keep the best point, restart
            z_new = z
            obj_new = obj
            restart = True
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_mom * t_mom))
        if restart:
            v = z_new.copy()
            t_mom = 1.0
        else:
            v = cand + (t_mom / t_next) * (cand - z_new) + ((t_mom - 1.0) / t_next) * (
                z_new - z_prev
            )
            v = np.maximum(v, 0.0)
            t_mom = t_next
        z_prev = z
        z = z_new
        obj = obj_new
        n = it + 1
        objs[n] = obj
        gz = np.dot(A.T, (np.dot(A, z) - y))
        pgv = np.where(z > 0.0, gz, np.minimum(gz, 0.0))
        pg = np.sqrt(np.dot(pgv, pgv))
        if pg <= tol:
            break
    return z, objs[: n + 1], n, pg


def _gaussian_colloc_impl(centers, sigma, ts):
    """Collocation matrix of translated Gaussians: out[m, j] = exp(-((ts[j]-centers[m])/sigma)^2)."""
    M = centers.shape[0]
    n = ts.shape[0]
    out = np.empty((M, n))
    for m in range(M):
        c = centers[m]
        for j in range(n):
            u = (ts[j] - c) / sigma
            out[m, j] = np.exp(-u * u)
    return out


def _gaussian_colloc_numpy(centers, sigma, ts):
    u = (np.asarray(ts, dtype=float)[None, :] - np.asarray(centers, dtype=float)[:, None]) / sigma
    return np.exp(-u * u)


apg_nnls_numpy = _apg_nnls_impl
gaussian_colloc_numpy = _gaussian_colloc_numpy

if NUMBA_ENABLED:
    apg_nnls_jit = njit(cache=True)(_apg_nnls_impl)
    gaussian_colloc_jit = njit(cache=True)(_gaussian_colloc_impl)
    apg_nnls = apg_nnls_jit
    gaussian_colloc = gaussian_colloc_jit
else:  # pragma: no cover - exercised via NNSR_NO_NUMBA=1
    apg_nnls_jit = None
    gaussian_colloc_jit = None
    apg_nnls = apg_nnls_numpy
    gaussian_colloc = gaussian_colloc_numpy
