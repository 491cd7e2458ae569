"""Hot numeric kernels with JIT and pure-numpy twins.

Two computations dominate sweep wall time: the supervised contrastive
loss+gradient evaluated every training step, and the SMO inner loops of the
RBF-kernel SVM. Each has two implementations that must agree to float64
round-off:

* a loop-structured version compiled with numba @njit(nogil=True) when numba
  is importable and CLAPADAPT_NO_NUMBA is unset;
* a pure-numpy version (vectorized for the contrastive kernel; the SMO loops
  share one source via closure factories and simply run uncompiled).

`active_backend()` reports which one dispatchers use; `set_backend` overrides
it (tests and benchmarks exercise both explicitly). Matmul-bound helpers like
the RBF Gram matrix stay plain numpy: BLAS already owns that time.

Kernels trust their callers: inputs are contiguous float64, labels int64,
row norms above the 1e-12 floor, and at least one anchor has a positive.
Validation lives in losses.py / classify.py.
"""

from __future__ import annotations

import os

import numpy as np

_ENV_FLAG = "CLAPADAPT_NO_NUMBA"

try:
    if os.environ.get(_ENV_FLAG, "") not in ("", "0"):
        raise ImportError("numba disabled by environment flag")
    from numba import njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

_BACKEND = "numba" if HAS_NUMBA else "numpy"


def active_backend() -> str:
    return _BACKEND


def set_backend(name: str) -> str:
    """Force 'numba' or 'numpy'; returns the previous backend."""
    global _BACKEND
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAS_NUMBA:
        raise ValueError("numba backend unavailable")
    previous = _BACKEND
    _BACKEND = name
    return previous


# supervised contrastive loss + gradient
#
# With u_i = v_i / ||v_i|| and S = U U^T, each anchor i that has positives
# P(i) (same label, j != i) contributes
#     logsumexp_{j != i}(S_ij / tau) - mean_{p in P(i)} S_ip / tau
# and anchors without positives are skipped. The gradient uses
# G_ij = q_ij - [j in P(i)]/|P(i)| with q the off-diagonal softmax, then
# dU = (G + G^T) U / tau, pulled back through the normalization:
# grad_i = (dU_i - (u_i . dU_i) u_i) / ||v_i||.


def _supcon_loops(V, labels, tau, average, want_grad):
    n, d = V.shape
    norms = np.empty(n)
    U = np.empty((n, d))
    for i in range(n):
        s = 0.0
        for j in range(d):
            s += V[i, j] * V[i, j]
        norms[i] = np.sqrt(s)
        inv = 1.0 / norms[i]
        for j in range(d):
            U[i, j] = V[i, j] * inv

    S = np.dot(U, U.T)

    npos = np.zeros(n, dtype=np.int64)
    for i in range(n):
        for j in range(n):
            if j != i and labels[j] == labels[i]:
                npos[i] += 1
    n_contrib = 0
    for i in range(n):
        if npos[i] > 0:
            n_contrib += 1

    if want_grad:
        G = np.zeros((n, n))
    else:
        G = np.zeros((1, 1))

    loss = 0.0
    for i in range(n):
        if npos[i] == 0:
            continue
        mx = -np.inf
        for j in range(n):
            if j != i and S[i, j] / tau > mx:
                mx = S[i, j] / tau
        se = 0.0
        for j in range(n):
            if j != i:
                se += np.exp(S[i, j] / tau - mx)
        lse = mx + np.log(se)
        pos = 0.0
        for j in range(n):
            if j != i and labels[j] == labels[i]:
                pos += S[i, j] / tau
        loss += lse - pos / npos[i]
        if want_grad:
            for j in range(n):
                if j == i:
                    continue
                q = np.exp(S[i, j] / tau - lse)
                if labels[j] == labels[i]:
                    G[i, j] = q - 1.0 / npos[i]
                else:
                    G[i, j] = q

    scale = 1.0 / n_contrib if average else 1.0
    loss *= scale

    if not want_grad:
        return loss, np.zeros((0, 0))

    M = (G + G.T) * (scale / tau)
    dU = np.dot(M, U)
    grad = np.empty((n, d))
    for i in range(n):
        dot = 0.0
        for j in range(d):
            dot += U[i, j] * dU[i, j]
        inv = 1.0 / norms[i]
        for j in range(d):
            grad[i, j] = (dU[i, j] - dot * U[i, j]) * inv
    return loss, grad


def _supcon_np(V, labels, tau, average, want_grad):
    n = V.shape[0]
    norms = np.sqrt(np.einsum("ij,ij->i", V, V))
    U = V / norms[:, None]
    L = (U @ U.T) / tau
    np.fill_diagonal(L, -np.inf)

    mx = L.max(axis=1)
    E = np.exp(L - mx[:, None])  # diagonal exp(-inf) = 0
    se = E.sum(axis=1)
    lse = mx + np.log(se)

    same = labels[:, None] == labels[None, :]
    np.fill_diagonal(same, False)
    npos = same.sum(axis=1)
    contrib = npos > 0
    n_contrib = int(contrib.sum())

    pos_mean = np.where(same, L, 0.0).sum(axis=1)[contrib] / npos[contrib]
    loss = float((lse[contrib] - pos_mean).sum())
    scale = 1.0 / n_contrib if average else 1.0
    loss *= scale

    if not want_grad:
        return loss, np.zeros((0, 0))

    q = E / se[:, None]
    G = q - same / np.maximum(npos, 1)[:, None]
    G[~contrib, :] = 0.0
    dU = ((G + G.T) * (scale / tau)) @ U
    grad = (dU - np.einsum("ij,ij->i", U, dU)[:, None] * U) / norms[:, None]
    return loss, grad


# SMO for the soft-margin SVM dual (Platt's heuristics)
#
# Decision function f(x) = sum_j alpha_j y_j K(x_j, x) + b, error cache
# E_i = f(x_i) - y_i. The three loop levels (take-step, examine, solve) are
# built by closure factories so the compiled and uncompiled twins share one
# source; vectorized O(n) updates inside the loops run well on both paths.
# `pool` is a precomputed array of uniform [0,1) doubles consumed cyclically
# for Platt's randomized scan starts, which keeps the kernel free of
# overflow-prone inline integer RNG while staying fully deterministic.

# Minimum significant relative alpha change per step. Platt used 1e-3, which
# can stall with residual KKT violations near tol + eps; 1e-7 converges to the
# stated tolerance at negligible extra cost for the problem sizes here.
_STEP_EPS = 1e-7


def _smo_take_step(K, y, alphas, E, i1, i2, b, C):
    if i1 == i2:
        return False, b
    a1 = alphas[i1]
    a2 = alphas[i2]
    y1 = y[i1]
    y2 = y[i2]
    E1 = E[i1]
    E2 = E[i2]
    s = y1 * y2
    if s > 0.0:
        L = max(0.0, a1 + a2 - C)
        H = min(C, a1 + a2)
    else:
        L = max(0.0, a2 - a1)
        H = min(C, C + a2 - a1)
    if H - L < 1e-12:
        return False, b
    k11 = K[i1, i1]
    k12 = K[i1, i2]
    k22 = K[i2, i2]
    eta = k11 + k22 - 2.0 * k12
    if eta > 1e-15:
        a2new = a2 + y2 * (E1 - E2) / eta
        if a2new < L:
            a2new = L
        elif a2new > H:
            a2new = H
    else:
        # degenerate curvature: evaluate the dual objective at both clip ends
        f1 = y1 * (E1 + b) - a1 * k11 - s * a2 * k12
        f2 = y2 * (E2 + b) - s * a1 * k12 - a2 * k22
        L1 = a1 + s * (a2 - L)
        H1 = a1 + s * (a2 - H)
        Lobj = L1 * f1 + L * f2 + 0.5 * L1 * L1 * k11 + 0.5 * L * L * k22 + s * L * L1 * k12
        Hobj = H1 * f1 + H * f2 + 0.5 * H1 * H1 * k11 + 0.5 * H * H * k22 + s * H * H1 * k12
        if Lobj < Hobj - _STEP_EPS:
            a2new = L
        elif Lobj > Hobj + _STEP_EPS:
            a2new = H
        else:
            a2new = a2
    if abs(a2new - a2) < _STEP_EPS * (a2new + a2 + _STEP_EPS):
        return False, b
    a1new = a1 + s * (a2 - a2new)
    if a1new < 0.0:
        a2new += s * a1new
        a1new = 0.0
    elif a1new > C:
        a2new += s * (a1new - C)
        a1new = C
    d1 = y1 * (a1new - a1)
    d2 = y2 * (a2new - a2)
    b1 = b - E1 - d1 * k11 - d2 * k12
    b2 = b - E2 - d1 * k12 - d2 * k22
    if 0.0 < a1new < C:
        bnew = b1
    elif 0.0 < a2new < C:
        bnew = b2
    else:
        bnew = 0.5 * (b1 + b2)
    E += d1 * K[:, i1] + d2 * K[:, i2] + (bnew - b)
    alphas[i1] = a1new
    alphas[i2] = a2new
    return True, bnew


def _make_examine(step):
    def examine(K, y, alphas, E, i2, b, C, tol, pool, cursor):
        n = K.shape[0]
        y2 = y[i2]
        a2 = alphas[i2]
        r2 = E[i2] * y2
        if (r2 < -tol and a2 < C) or (r2 > tol and a2 > 0.0):
            nb = np.where((alphas > 0.0) & (alphas < C))[0]
            if nb.size > 1:
                # second-choice heuristic: largest |E1 - E2| among non-bound
                best = -1.0
                i1 = -1
                for t in nb:
                    diff = abs(E[t] - E[i2])
                    if diff > best:
                        best = diff
                        i1 = t
                changed, b = step(K, y, alphas, E, i1, i2, b, C)
                if changed:
                    return 1, b, cursor
            if nb.size > 0:
                start = int(pool[cursor % pool.size] * nb.size)
                cursor += 1
                for t in range(nb.size):
                    i1 = nb[(start + t) % nb.size]
                    changed, b = step(K, y, alphas, E, i1, i2, b, C)
                    if changed:
                        return 1, b, cursor
            start = int(pool[cursor % pool.size] * n)
            cursor += 1
            for t in range(n):
                i1 = (start + t) % n
                changed, b = step(K, y, alphas, E, i1, i2, b, C)
                if changed:
                    return 1, b, cursor
        return 0, b, cursor

    return examine


def _make_solve(examine):
    def solve(K, y, C, tol, max_passes, pool):
        n = K.shape[0]
        alphas = np.zeros(n)
        E = -y.copy()  # f = 0 everywhere at the start
        b = 0.0
        cursor = 0
        examine_all = True
        passes = 0
        converged = False
        while passes < max_passes:
            num_changed = 0
            if examine_all:
                for i2 in range(n):
                    c, b, cursor = examine(K, y, alphas, E, i2, b, C, tol, pool, cursor)
                    num_changed += c
            else:
                nb = np.where((alphas > 0.0) & (alphas < C))[0]
                for i2 in nb:
                    c, b, cursor = examine(K, y, alphas, E, i2, b, C, tol, pool, cursor)
                    num_changed += c
            passes += 1
            if examine_all:
                if num_changed == 0:
                    converged = True  # full pass, no KKT violation left
                    break
                examine_all = False
            elif num_changed == 0:
                examine_all = True
        return alphas, b, passes, converged

    return solve


_smo_solve_py = _make_solve(_make_examine(_smo_take_step))

if HAS_NUMBA:
    # leaf step caches to disk; the closure-built layers compile per process
    _supcon_loops_jit = njit(cache=True, nogil=True)(_supcon_loops)
    _step_jit = njit(cache=True, nogil=True)(_smo_take_step)
    _smo_solve_jit = njit(nogil=True)(_make_solve(njit(nogil=True)(_make_examine(_step_jit))))


# dispatchers


def supcon_value_grad(V, labels, tau: float, average: bool, want_grad: bool):
    """Loss (and gradient w.r.t. the raw, unnormalized inputs when requested).

    V: (n, d) float64 rows with norms above the floor; labels: (n,) int64;
    at least one anchor must have a positive. Returns (loss, grad) where grad
    has shape (n, d), or (0, 0) when want_grad is False.
    """
    V = np.ascontiguousarray(V, dtype=np.float64)
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    if _BACKEND == "numba":
        return _supcon_loops_jit(V, labels, float(tau), bool(average), bool(want_grad))
    return _supcon_np(V, labels, float(tau), bool(average), bool(want_grad))


def smo_solve(K, y, C: float, tol: float, max_passes: int, pool):
    """Solve the SVM dual on a precomputed Gram matrix.

    Returns (alphas, bias, passes, converged). `pool` is a non-empty float64
    array of uniforms in [0, 1) used for randomized scan starts; identical
    pools give identical runs.
    """
    K = np.ascontiguousarray(K, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    pool = np.ascontiguousarray(pool, dtype=np.float64)
    if _BACKEND == "numba":
        return _smo_solve_jit(K, y, float(C), float(tol), int(max_passes), pool)
    return _smo_solve_py(K, y, float(C), float(tol), int(max_passes), pool)


def rbf_gram(X, Z=None, gamma: float = 1.0) -> np.ndarray:
    """exp(-gamma * ||x - z||^2) Gram matrix in float64 (BLAS-bound, no JIT)."""
    X = np.asarray(X, dtype=np.float64)
    Z = X if Z is None else np.asarray(Z, dtype=np.float64)
    sx = np.einsum("ij,ij->i", X, X)
    sz = np.einsum("ij,ij->i", Z, Z)
    d2 = sx[:, None] + sz[None, :] - 2.0 * (X @ Z.T)
    np.maximum(d2, 0.0, out=d2)
    return np.exp(-gamma * d2)
