"""Vectorized numpy implementations of the sparse inner-loop kernels.

Every kernel walks the nonzeros of a sparse count matrix given as parallel
``rows``/``cols`` index arrays; factor matrices are row-major with the
latent dimension last.
"""

import numpy as np


def sparse_dot(rows, cols, A, B):
    """out[n] = sum_k A[rows[n], k] * B[cols[n], k]."""
    return np.einsum("nk,nk->n", A[rows], B[cols])


def scatter_rows(rows, cols, vals, B, n_out):
    """out[rows[n], :] += vals[n] * B[cols[n], :]."""
    out = np.zeros((n_out, B.shape[1]))
    np.add.at(out, rows, vals[:, None] * B[cols])
    return out


def scatter_add(idx, weights, M, n_out):
    """out[idx[n], :] += weights[n] * M[n, :]."""
    out = np.zeros((n_out, M.shape[1]))
    np.add.at(out, idx, weights[:, None] * M)
    return out


def compute_phi(rows, cols, elw, elh):
    """Row-wise softmax of elw[rows] + elh[cols]."""
    logits = elw[rows] + elh[cols]
    logits -= logits.max(axis=1, keepdims=True)
    np.exp(logits, out=logits)
    logits /= logits.sum(axis=1, keepdims=True)
    return logits


def allocation_term(rows, cols, y, phi, elw, elh):
    """sum_n y[n] * sum_k phi[n,k] * (elw[r,k] + elh[c,k] - log phi[n,k])."""
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = np.where(phi > 0, phi * np.log(phi), 0.0)
    inner = (phi * (elw[rows] + elh[cols]) - ent).sum(axis=1)
    return float(np.dot(y, inner))
