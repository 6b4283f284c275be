"""Maximum-likelihood NBMF by block majorization-minimization.

Each half-step rescales a factor multiplicatively,

    h_ik <- h_ik * sum_u (y_ui / yhat_ui) w_uk / sum_u ((y_ui + alpha) / (yhat_ui + alpha)) w_uk

which never increases the full-cell objective ``divergence.objective``.
The W update is the same step applied to the transposed problem.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .core import FitTrace, NumericalError, SparseCountMatrix, check_factors
from .divergence import objective


@dataclass(frozen=True)
class MMConfig:
    K: int
    alpha: float = 1.0
    max_iters: int = 1000
    rel_tol: float = 1e-5
    seed: int = 0
    init_scale: Optional[float] = None  # default sqrt(mean(Y) / K)

    def __post_init__(self):
        if int(self.K) < 1:
            raise ValueError("K must be at least 1")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if int(self.max_iters) < 1:
            raise ValueError("max_iters must be positive")
        if not 0 < self.rel_tol < 1:
            raise ValueError("rel_tol must lie in (0, 1)")
        if self.init_scale is not None and not self.init_scale > 0:
            raise ValueError("init_scale must be positive")


def update_H(Y: SparseCountMatrix, W, H_bar, alpha):
    """One multiplicative MM step on H with W held fixed."""
    W = np.ascontiguousarray(W, dtype=np.float64)
    H_bar = np.ascontiguousarray(H_bar, dtype=np.float64)
    check_factors(Y, W, H_bar)
    y = Y.values
    yhat_nz = kernels.sparse_dot(Y.rows, Y.cols, W, H_bar)
    if np.any(yhat_nz <= 0):
        raise NumericalError("predicted mean is zero on an observed entry")
    numer = kernels.scatter_rows(Y.cols, Y.rows, y / yhat_nz, W, Y.n_items)
    # Denominator: alpha / (yhat + alpha) on every cell plus y / (yhat + alpha)
    # on the nonzeros.
    yhat = W @ H_bar.T
    denom = (alpha / (yhat + alpha)).T @ W
    denom += kernels.scatter_rows(Y.cols, Y.rows, y / (yhat_nz + alpha), W, Y.n_items)
    if np.any(denom <= 0):
        raise NumericalError("non-positive MM denominator")
    return H_bar * (numer / denom)


def update_W(Y: SparseCountMatrix, W_bar, H, alpha):
    """One multiplicative MM step on W with H held fixed."""
    return update_H(Y.T, H, W_bar, alpha)


def init_factors(Y: SparseCountMatrix, K, seed, init_scale=None):
    """Uniform(0.5, 1.5) * init_scale draws for W then H."""
    if init_scale is None:
        init_scale = np.sqrt(Y.total() / (Y.n_users * Y.n_items) / K)
        if init_scale <= 0:
            init_scale = 1.0
    rng = np.random.Generator(np.random.Philox(seed))
    W = rng.uniform(0.5, 1.5, size=(Y.n_users, K)) * init_scale
    H = rng.uniform(0.5, 1.5, size=(Y.n_items, K)) * init_scale
    return W, H


def fit_mm(Y: SparseCountMatrix, config: MMConfig, W0=None, H0=None):
    """Alternate W and H updates until the relative decrease drops below rel_tol.

    Returns ``(W, H, trace)``; trace entry 0 is the objective at the
    initialization.
    """
    if Y.nnz == 0:
        raise ValueError("cannot fit an empty count matrix")
    W, H = init_factors(Y, config.K, config.seed, config.init_scale)
    if W0 is not None:
        W = np.array(W0, dtype=np.float64)
    if H0 is not None:
        H = np.array(H0, dtype=np.float64)
    check_factors(Y, W, H)

    trace = FitTrace()
    prev = objective(Y, W, H, config.alpha)
    trace.append(0, prev, 0.0)
    for it in range(1, config.max_iters + 1):
        tic = time.perf_counter()
        W = update_W(Y, W, H, config.alpha)
        H = update_H(Y, W, H, config.alpha)
        cur = objective(Y, W, H, config.alpha)
        trace.append(it, cur, time.perf_counter() - tic)
        if not np.isfinite(cur):
            raise NumericalError(f"objective became non-finite at iteration {it}")
        if prev == 0 or (prev - cur) / abs(prev) < config.rel_tol:
            break
        prev = cur
    return W, H, trace
