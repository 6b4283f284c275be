"""numba versions of the kernels in ``_numpy``; same signatures and results."""

import math

import numpy as np
from numba import njit, prange


@njit(parallel=True, cache=True)
def sparse_dot(rows, cols, A, B):
    n = rows.shape[0]
    K = A.shape[1]
    out = np.empty(n)
    for j in prange(n):
        r = rows[j]
        c = cols[j]
        s = 0.0
        for k in range(K):
            s += A[r, k] * B[c, k]
        out[j] = s
    return out


@njit(cache=True)
def scatter_rows(rows, cols, vals, B, n_out):
    K = B.shape[1]
    out = np.zeros((n_out, K))
    for j in range(rows.shape[0]):
        r = rows[j]
        c = cols[j]
        v = vals[j]
        for k in range(K):
            out[r, k] += v * B[c, k]
    return out


@njit(cache=True)
def scatter_add(idx, weights, M, n_out):
    K = M.shape[1]
    out = np.zeros((n_out, K))
    for j in range(idx.shape[0]):
        r = idx[j]
        v = weights[j]
        for k in range(K):
            out[r, k] += v * M[j, k]
    return out


@njit(parallel=True, cache=True)
def compute_phi(rows, cols, elw, elh):
    n = rows.shape[0]
    K = elw.shape[1]
    phi = np.empty((n, K))
    for j in prange(n):
        r = rows[j]
        c = cols[j]
        m = -np.inf
        for k in range(K):
            v = elw[r, k] + elh[c, k]
            phi[j, k] = v
            if v > m:
                m = v
        s = 0.0
        for k in range(K):
            e = math.exp(phi[j, k] - m)
            phi[j, k] = e
            s += e
        for k in range(K):
            phi[j, k] /= s
    return phi


@njit(cache=True)
def allocation_term(rows, cols, y, phi, elw, elh):
    total = 0.0
    K = elw.shape[1]
    for j in range(rows.shape[0]):
        r = rows[j]
        c = cols[j]
        s = 0.0
        for k in range(K):
            p = phi[j, k]
            if p > 0.0:
                s += p * (elw[r, k] + elh[c, k] - math.log(p))
        total += y[j] * s
    return total
