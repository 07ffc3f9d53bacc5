"""Batched criterion kernels, the inner loop of every swarm iteration.

Each kernel scores a stack of designs shaped ``(S, N, K)`` and returns an
``(S,)`` float array in which singular designs carry ``+inf``.  Rows are
sorted on (|x|, x) before the information matrix is accumulated, so a score
does not depend on the order in which design points are listed, down to the
last bit, and negating a factor only flips signs inside the sums (rounding is
sign-symmetric) rather than reordering them.

Two interchangeable implementations exist: a numba kernel that loops over
designs with a hand-rolled Cholesky, and a numpy version that runs the same
factorisation vectorised across the stack.  The module-level ``d_scores`` /
``iv_scores`` dispatch to whichever one ``optdes._accel`` selected.
"""

from __future__ import annotations

import math

import numpy as np

from ._accel import USE_NUMBA, njit

# a design is singular when some Cholesky pivot of F'F falls to
# SINGULAR_RTOL times its diagonal entry, i.e. a model column is collinear
# with the earlier ones up to 1 - R^2 <= SINGULAR_RTOL
SINGULAR_RTOL = 1e-12


def _pair_index(K: int) -> tuple[np.ndarray, np.ndarray]:
    i, j = np.triu_indices(K, k=1)
    return i.astype(np.int64), j.astype(np.int64)


# -- numba path ---------------------------------------------------------------


@njit(cache=True)
def _score_batch_nb(designs, pi, pj, chol_w, volume, want_iv):
    S, N, K = designs.shape
    n_pairs = pi.shape[0]
    p = 1 + 2 * K + n_pairs
    out = np.empty(S)
    order = np.empty(N, dtype=np.int64)
    f = np.empty(p)
    M = np.empty((p, p))
    Y = np.empty((p, p))
    diag = np.empty(p)
    rtol = SINGULAR_RTOL

    for s in range(S):
        X = designs[s]
        # insertion sort of row indices on (|x_1|..|x_K|, x_1..x_K)
        for r in range(N):
            order[r] = r
        for r in range(1, N):
            cur = order[r]
            q = r - 1
            while q >= 0:
                prev = order[q]
                greater = False
                decided = False
                for k in range(K):
                    a, b = abs(X[prev, k]), abs(X[cur, k])
                    if a != b:
                        greater = a > b
                        decided = True
                        break
                if not decided:
                    for k in range(K):
                        if X[prev, k] != X[cur, k]:
                            greater = X[prev, k] > X[cur, k]
                            break
                if not greater:
                    break
                order[q + 1] = prev
                q -= 1
            order[q + 1] = cur

        for a in range(p):
            for b in range(p):
                M[a, b] = 0.0
        for r in range(N):
            row = order[r]
            f[0] = 1.0
            for k in range(K):
                f[1 + k] = X[row, k]
                f[1 + K + n_pairs + k] = X[row, k] * X[row, k]
            for t in range(n_pairs):
                f[1 + K + t] = X[row, pi[t]] * X[row, pj[t]]
            for a in range(p):
                fa = f[a]
                for b in range(a + 1):
                    M[a, b] += fa * f[b]

        # in-place lower Cholesky
        for j in range(p):
            diag[j] = M[j, j]
        ok = True
        logdet = 0.0
        for j in range(p):
            d = M[j, j]
            for k in range(j):
                d -= M[j, k] * M[j, k]
            if not d > rtol * diag[j]:
                ok = False
                break
            ljj = math.sqrt(d)
            M[j, j] = ljj
            logdet += 2.0 * math.log(ljj)
            for i in range(j + 1, p):
                acc = M[i, j]
                for k in range(j):
                    acc -= M[i, k] * M[j, k]
                M[i, j] = acc / ljj
        if not ok:
            out[s] = np.inf
            continue
        if not want_iv:
            out[s] = math.exp(p * math.log(N) - logdet)
            continue

        # trace((LL')^{-1} CC') = ||L^{-1} C||_F^2
        tr = 0.0
        for c in range(p):
            for i in range(p):
                acc = chol_w[i, c]
                for k in range(i):
                    acc -= M[i, k] * Y[k, c]
                Y[i, c] = acc / M[i, i]
                tr += Y[i, c] * Y[i, c]
        out[s] = N / volume * tr
    return out


# -- numpy path ---------------------------------------------------------------


def _sorted_rows(designs: np.ndarray) -> np.ndarray:
    S, N, K = designs.shape
    keys = np.concatenate([np.abs(designs), designs], axis=2)
    order = np.broadcast_to(np.arange(N), (S, N)).copy()
    for k in range(2 * K - 1, -1, -1):
        col = np.take_along_axis(keys[:, :, k], order, axis=1)
        order = np.take_along_axis(order, np.argsort(col, axis=1, kind="stable"), axis=1)
    return np.take_along_axis(designs, order[:, :, None], axis=1)


def _model_matrices(designs: np.ndarray, pi: np.ndarray, pj: np.ndarray) -> np.ndarray:
    ones = np.ones(designs.shape[:2] + (1,))
    inter = designs[:, :, pi] * designs[:, :, pj]
    return np.concatenate([ones, designs, inter, designs * designs], axis=2)


def _cholesky_batch(M: np.ndarray):
    """Lower Cholesky factors of a stack of matrices, one column at a time.

    Returns ``(L, ok)``; rows of ``ok`` are False where a pivot failed the
    collinearity test, and those factors are garbage.
    """
    S, p, _ = M.shape
    L = np.zeros_like(M)
    ok = np.ones(S, dtype=bool)
    diag = np.diagonal(M, axis1=1, axis2=2)
    for j in range(p):
        Lj = L[:, j, :j]
        d = M[:, j, j] - np.einsum("sk,sk->s", Lj, Lj)
        ok &= d > SINGULAR_RTOL * diag[:, j]
        ljj = np.sqrt(np.where(ok, d, 1.0))
        L[:, j, j] = ljj
        if j + 1 < p:
            L[:, j + 1 :, j] = (M[:, j + 1 :, j] - np.einsum("sik,sk->si", L[:, j + 1 :, :j], Lj)) / ljj[:, None]
    return L, ok


def _score_batch_np(designs, pi, pj, chol_w, volume, want_iv):
    S, N, K = designs.shape
    F = _model_matrices(_sorted_rows(designs), pi, pj)
    p = F.shape[2]
    M = np.matmul(F.transpose(0, 2, 1), F)
    L, ok = _cholesky_batch(M)
    out = np.full(S, np.inf)
    if not np.any(ok):
        return out
    L = L[ok]
    pivots = np.diagonal(L, axis1=1, axis2=2)
    if not want_iv:
        out[ok] = np.exp(p * math.log(N) - 2.0 * np.log(pivots).sum(axis=1))
        return out
    # forward substitution L Y = C for all designs at once
    Y = np.empty((L.shape[0], p, p))
    for i in range(p):
        Y[:, i, :] = (chol_w[i][None, :] - np.einsum("sk,skc->sc", L[:, i, :i], Y[:, :i, :])) / pivots[:, i, None]
    out[ok] = N / volume * np.einsum("sic,sic->s", Y, Y)
    return out


# -- public dispatch ----------------------------------------------------------


def _numba_selected(use_numba: bool | None) -> bool:
    return USE_NUMBA if use_numba is None else bool(use_numba)


def _prepare(designs) -> np.ndarray:
    designs = np.asarray(designs, dtype=np.float64)
    if designs.ndim != 3:
        raise ValueError(f"expected a (S, N, K) stack of designs, got shape {designs.shape}")
    return np.ascontiguousarray(designs)


def d_scores(designs, *, use_numba: bool | None = None) -> np.ndarray:
    """D-scores ``N**p / det(F'F)`` for a stack of designs."""
    designs = _prepare(designs)
    S, N, K = designs.shape
    p = (K + 1) * (K + 2) // 2
    if N < p:
        return np.full(S, np.inf)
    pi, pj = _pair_index(K)
    if _numba_selected(use_numba):
        return _score_batch_nb(designs, pi, pj, np.zeros((p, p)), 1.0, False)
    return _score_batch_np(designs, pi, pj, None, 1.0, False)


def iv_scores(designs, moments, *, use_numba: bool | None = None) -> np.ndarray:
    """Integrated-variance scores ``(N/V) tr((F'F)^{-1} W)``.

    ``moments`` is a :class:`optdes.criteria.MomentMatrix` for the same K.
    """
    designs = _prepare(designs)
    S, N, K = designs.shape
    if moments.K != K:
        raise ValueError(f"moment matrix is for K={moments.K}, designs have K={K}")
    p = moments.W.shape[0]
    if N < p:
        return np.full(S, np.inf)
    pi, pj = _pair_index(K)
    if _numba_selected(use_numba):
        return _score_batch_nb(designs, pi, pj, moments.cholesky, float(moments.V), True)
    return _score_batch_np(designs, pi, pj, moments.cholesky, float(moments.V), True)
