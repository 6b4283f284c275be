"""The mean-parametrized negative binomial divergence and likelihood.

For dispersion alpha the divergence between a count ``a`` and a mean ``b`` is

    d(a|b) = a log(a/b) - (alpha + a) log((alpha + a) / (alpha + b))

with a log(a/b) = 0 at a = 0. It tends to the generalized KL divergence
a log(a/b) - a + b as alpha grows, and sums to the NB negative
log-likelihood up to a term that does not depend on b.
"""

import numpy as np

from . import kernels
from .core import NumericalError, SparseCountMatrix, check_factors
from .specfun import gammaln


def _xlogy_ratio(a, b):
    """a * log(a / b), continuous at a = 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(a > 0, a * np.log(np.where(a > 0, a, 1.0) / b), 0.0)


def _check_args(a, b, alpha):
    if np.any(np.asarray(a) < 0):
        raise ValueError("divergence requires a >= 0")
    if np.any(np.asarray(b) <= 0):
        raise ValueError("divergence requires b > 0")
    if np.any(np.asarray(alpha) <= 0):
        raise ValueError("divergence requires alpha > 0")


def nb_divergence(a, b, alpha):
    _check_args(a, b, alpha)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    # log1p keeps the second term accurate when alpha >> |a - b|.
    out = _xlogy_ratio(a, b) - (alpha + a) * np.log1p((a - b) / (alpha + b))
    out = np.maximum(out, 0.0)
    return out if out.ndim else float(out)


def kl_divergence(a, b):
    _check_args(a, b, 1.0)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    out = np.maximum(_xlogy_ratio(a, b) - a + b, 0.0)
    return out if out.ndim else float(out)


def objective(Y: SparseCountMatrix, W, H, alpha):
    """Sum of d_alpha(y_ui | [W H^T]_ui) over all U x I cells.

    Zero cells contribute alpha * log(1 + yhat / alpha). They are summed
    densely and the nonzeros are added as sparse corrections.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    W = np.asarray(W, dtype=np.float64)
    H = np.asarray(H, dtype=np.float64)
    check_factors(Y, W, H)
    yhat = W @ H.T
    if np.any(yhat < 0) or not np.all(np.isfinite(yhat)):
        raise NumericalError("predicted means must be finite and nonnegative")
    dense = alpha * np.log1p(yhat / alpha).sum()
    if Y.nnz == 0:
        return float(dense)
    y = Y.values
    yhat_nz = kernels.sparse_dot(Y.rows, Y.cols, W, H)
    if np.any(yhat_nz <= 0):
        raise NumericalError("predicted mean is zero on an observed entry")
    corr = nb_divergence(y, yhat_nz, alpha) - alpha * np.log1p(yhat_nz / alpha)
    return float(dense + corr.sum())


def kl_objective(Y: SparseCountMatrix, W, H):
    """Generalized KL between Y and W H^T over all cells."""
    W = np.asarray(W, dtype=np.float64)
    H = np.asarray(H, dtype=np.float64)
    check_factors(Y, W, H)
    total = float(W.sum(axis=0) @ H.sum(axis=0))
    if Y.nnz:
        y = Y.values
        yhat_nz = kernels.sparse_dot(Y.rows, Y.cols, W, H)
        if np.any(yhat_nz <= 0):
            raise NumericalError("predicted mean is zero on an observed entry")
        total += float((y * np.log(y / yhat_nz) - y).sum())
    return total


def nb_log_pmf(y, mean, alpha):
    """log P(Y = y) for the NB distribution with the given mean and dispersion."""
    y = np.asarray(y, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    if np.any(y < 0) or np.any(y != np.round(y)):
        raise ValueError("y must be a nonnegative integer")
    if np.any(mean <= 0) or np.any(alpha <= 0):
        raise ValueError("mean and alpha must be positive")
    # p = mean / (mean + alpha), 1 - p = alpha / (mean + alpha)
    log_norm = gammaln(y + alpha) - gammaln(y + 1.0) - gammaln(alpha)
    with np.errstate(divide="ignore", invalid="ignore"):
        y_term = np.where(y > 0, y * (np.log(mean) - np.log(mean + alpha)), 0.0)
    out = log_norm + y_term - alpha * np.log1p(mean / alpha)
    return out if out.ndim else float(out)
