"""Domain types shared by the solvers, and the recommendation score."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .specfun import digamma

# Cells of U x I above which exposure moments are streamed in row blocks
# instead of cached densely.
DEFAULT_DENSE_BUDGET = 1 << 24


class NumericalError(ArithmeticError):
    """A quantity left its mathematical domain (non-positive mean, NaN, ...)."""


class Mode(str, enum.Enum):
    NBMF = "NBMF"
    PF = "PF"  # exposure pinned to 1, the alpha -> infinity limit


@dataclass(frozen=True, eq=False)
class SparseCountMatrix:
    """U x I matrix of nonnegative integer counts stored as its nonzeros.

    Entries are kept in row-major (user, item) order. Optional ``users`` and
    ``items`` hold the external tokens for each dense index.
    """

    n_users: int
    n_items: int
    rows: np.ndarray
    cols: np.ndarray
    counts: np.ndarray
    users: Optional[tuple] = None
    items: Optional[tuple] = None

    def __post_init__(self):
        if self.n_users < 1 or self.n_items < 1:
            raise ValueError("matrix dimensions must be positive")
        rows = np.asarray(self.rows, dtype=np.int64).ravel()
        cols = np.asarray(self.cols, dtype=np.int64).ravel()
        counts = np.asarray(self.counts).ravel()
        if not (rows.shape == cols.shape == counts.shape):
            raise ValueError("rows, cols and counts must have equal length")
        if counts.size:
            if np.any(counts != np.round(counts)) or np.any(counts < 1):
                raise ValueError("stored counts must be positive integers")
            if rows.min() < 0 or rows.max() >= self.n_users:
                raise ValueError("user index out of range")
            if cols.min() < 0 or cols.max() >= self.n_items:
                raise ValueError("item index out of range")
        order = np.lexsort((cols, rows))
        rows, cols, counts = rows[order], cols[order], counts[order].astype(np.int64)
        if rows.size > 1:
            dup = (rows[1:] == rows[:-1]) & (cols[1:] == cols[:-1])
            if np.any(dup):
                raise ValueError("duplicate (user, item) entries")
        if self.users is not None and len(self.users) != self.n_users:
            raise ValueError("users vocabulary does not match n_users")
        if self.items is not None and len(self.items) != self.n_items:
            raise ValueError("items vocabulary does not match n_items")
        for name, arr in (("rows", rows), ("cols", cols), ("counts", counts)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.users is not None:
            object.__setattr__(self, "users", tuple(self.users))
        if self.items is not None:
            object.__setattr__(self, "items", tuple(self.items))

    @classmethod
    def from_entries(cls, n_users, n_items, entries, users=None, items=None):
        entries = list(entries)
        if entries:
            r, c, y = zip(*entries)
        else:
            r, c, y = (), (), ()
        return cls(n_users, n_items, np.array(r, dtype=np.int64), np.array(c, dtype=np.int64),
                   np.array(y), users, items)

    @classmethod
    def from_dense(cls, Y, users=None, items=None):
        Y = np.asarray(Y)
        if Y.ndim != 2:
            raise ValueError("dense count matrix must be 2-D")
        if np.any(Y < 0) or np.any(Y != np.round(Y)):
            raise ValueError("counts must be nonnegative integers")
        r, c = np.nonzero(Y)
        return cls(Y.shape[0], Y.shape[1], r, c, Y[r, c].astype(np.int64), users, items)

    @property
    def shape(self):
        return (self.n_users, self.n_items)

    @property
    def nnz(self):
        return int(self.counts.size)

    @property
    def density(self):
        return self.nnz / (self.n_users * self.n_items)

    @property
    def entries(self):
        return list(zip(self.rows.tolist(), self.cols.tolist(), self.counts.tolist()))

    @property
    def values(self):
        """Counts as float64, the form every solver consumes."""
        return self.counts.astype(np.float64)

    @property
    def T(self):
        return SparseCountMatrix(self.n_items, self.n_users, self.cols, self.rows, self.counts,
                                 self.items, self.users)

    def total(self):
        return int(self.counts.sum())

    def row_sums(self):
        return np.bincount(self.rows, weights=self.counts, minlength=self.n_users)

    def col_sums(self):
        return np.bincount(self.cols, weights=self.counts, minlength=self.n_items)

    def row_support(self):
        """Number of distinct items per user."""
        return np.bincount(self.rows, minlength=self.n_users)

    def col_support(self):
        return np.bincount(self.cols, minlength=self.n_items)

    def to_dense(self):
        out = np.zeros(self.shape, dtype=np.int64)
        out[self.rows, self.cols] = self.counts
        return out

    def with_counts(self, counts):
        return replace(self, counts=np.asarray(counts))

    def find(self, u, i):
        """Position of entry (u, i) in the nonzero arrays, or -1 if zero."""
        lo = np.searchsorted(self.rows, u, side="left")
        hi = np.searchsorted(self.rows, u, side="right")
        pos = lo + np.searchsorted(self.cols[lo:hi], i)
        if pos < hi and self.cols[pos] == i:
            return int(pos)
        return -1


@dataclass(frozen=True)
class HyperParams:
    """NB dispersion and gamma prior parameters.

    Defaults follow the recommendation experiments: unit shapes, beta_w equal
    to alpha_w, alpha = 1; ``beta_h`` is the starting value when it is learned.
    """

    alpha: float = 1.0
    alpha_w: float = 1.0
    beta_w: float = 1.0
    alpha_h: float = 1.0
    beta_h: float = 1.0
    mode: Mode = Mode.NBMF

    def __post_init__(self):
        for name in ("alpha", "alpha_w", "beta_w", "alpha_h", "beta_h"):
            value = float(getattr(self, name))
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a finite positive number, got {value}")
            object.__setattr__(self, name, value)
        object.__setattr__(self, "mode", Mode(self.mode))

    @property
    def pf(self):
        return self.mode is Mode.PF


@dataclass(frozen=True)
class GammaVariationalMatrix:
    """Elementwise Gamma(shape, rate) factors of a mean-field posterior."""

    shape: np.ndarray
    rate: np.ndarray

    @cached_property
    def mean(self):
        return self.shape / self.rate

    @cached_property
    def mean_log(self):
        return digamma(self.shape) - np.log(self.rate)


class ExposurePosterior:
    """q(a_ui) = Gamma(alpha + y_ui, alpha + sum_k w_ref[u,k] h_ref[i,k]).

    The shape is implicit (alpha plus the sparse counts) and the rate is
    rebuilt from the reference factor means it was computed from. Dense
    U x I products are cached only when U * I <= ``dense_budget``; otherwise
    they are streamed in row blocks.
    """

    def __init__(self, Y: SparseCountMatrix, alpha, w_ref, h_ref, dense_budget=DEFAULT_DENSE_BUDGET):
        self.Y = Y
        self.alpha = float(alpha)
        self.w_ref = np.ascontiguousarray(w_ref, dtype=np.float64)
        self.h_ref = np.ascontiguousarray(h_ref, dtype=np.float64)
        self.dense_budget = int(dense_budget)
        self.yhat_nz = kernels.sparse_dot(Y.rows, Y.cols, self.w_ref, self.h_ref)
        U, I = Y.shape
        self._block_rows = max(1, self.dense_budget // I)
        self._yhat_dense = self.w_ref @ self.h_ref.T if U * I <= self.dense_budget else None

    @property
    def shape_nz(self):
        return self.alpha + self.Y.values

    @property
    def rate_nz(self):
        return self.alpha + self.yhat_nz

    @property
    def mean_nz(self):
        return self.shape_nz / self.rate_nz

    @property
    def mean_log_nz(self):
        return digamma(self.shape_nz) - np.log(self.rate_nz)

    def blocks(self):
        """Yield (row slice, reference prediction block) pairs covering all cells."""
        if self._yhat_dense is not None:
            yield slice(0, self.Y.n_users), self._yhat_dense
            return
        for start in range(0, self.Y.n_users, self._block_rows):
            sl = slice(start, min(start + self._block_rows, self.Y.n_users))
            yield sl, self.w_ref[sl] @ self.h_ref.T

    def weighted_item_sums(self, B):
        """sum_i <a_ui> B[i, :] for every user; B is I x K."""
        out = np.empty((self.Y.n_users, B.shape[1]))
        for sl, yhat in self.blocks():
            out[sl] = (self.alpha / (self.alpha + yhat)) @ B
        corr = self.Y.values / self.rate_nz
        return out + kernels.scatter_rows(self.Y.rows, self.Y.cols, corr, B, self.Y.n_users)

    def weighted_user_sums(self, A):
        """sum_u <a_ui> A[u, :] for every item; A is U x K."""
        out = np.zeros((self.Y.n_items, A.shape[1]))
        for sl, yhat in self.blocks():
            out += (self.alpha / (self.alpha + yhat)).T @ A[sl]
        corr = self.Y.values / self.rate_nz
        return out + kernels.scatter_rows(self.Y.cols, self.Y.rows, corr, A, self.Y.n_items)

    def scaled(self, lam):
        """Posterior with the same rates under the W / lam, H * lam rescaling."""
        return ExposurePosterior(self.Y, self.alpha, self.w_ref / lam, self.h_ref * lam, self.dense_budget)

    def as_gamma(self):
        """Materialize the dense U x I shape/rate pair."""
        shape = np.full(self.Y.shape, self.alpha)
        shape[self.Y.rows, self.Y.cols] += self.Y.values
        rate = self.alpha + self.w_ref @ self.h_ref.T
        return GammaVariationalMatrix(shape, rate)

    @property
    def shape(self):
        return self.as_gamma().shape

    @property
    def rate(self):
        return self.as_gamma().rate

    @property
    def mean(self):
        return self.as_gamma().mean

    @property
    def mean_log(self):
        return self.as_gamma().mean_log


@dataclass
class VariationalState:
    """Mean-field posterior over W, H, the exposures A and the allocations C.

    ``phi[n]`` is the allocation distribution of the n-th nonzero of Y.
    ``q_a`` is None in PF mode, where every exposure is fixed at 1.
    """

    q_w: GammaVariationalMatrix
    q_h: GammaVariationalMatrix
    q_a: Optional[ExposurePosterior]
    phi: np.ndarray
    hyper: HyperParams

    @property
    def K(self):
        return self.q_w.shape.shape[1]


@dataclass
class FitTrace:
    """Objective value (MM cost or ELBO) and wall time per iteration."""

    iterations: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    seconds: list = field(default_factory=list)

    def append(self, iteration, value, seconds):
        self.iterations.append(int(iteration))
        self.objective.append(float(value))
        self.seconds.append(float(seconds))

    def __len__(self):
        return len(self.objective)

    def is_monotone(self, increasing, slack=1e-9):
        vals = self.objective
        for prev, cur in zip(vals, vals[1:]):
            step = cur - prev if increasing else prev - cur
            if step < -slack * abs(prev):
                return False
        return True

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["iter", "objective", "seconds"])
            for it, obj, sec in zip(self.iterations, self.objective, self.seconds):
                writer.writerow([it, f"{obj:.17g}", f"{sec:.6f}"])


def predict_scores(W_mean, H_mean):
    """Expected counts [W H^T]: the score used to rank items for each user."""
    W_mean = np.asarray(W_mean, dtype=np.float64)
    H_mean = np.asarray(H_mean, dtype=np.float64)
    if W_mean.ndim != 2 or H_mean.ndim != 2 or W_mean.shape[1] != H_mean.shape[1]:
        raise ValueError(
            f"factor shapes {W_mean.shape} and {H_mean.shape} do not share a latent dimension"
        )
    return W_mean @ H_mean.T


def check_factors(Y: SparseCountMatrix, W, H):
    if W.ndim != 2 or H.ndim != 2 or W.shape[1] != H.shape[1]:
        raise ValueError(f"factor shapes {W.shape} and {H.shape} do not share a latent dimension")
    if W.shape[0] != Y.n_users or H.shape[0] != Y.n_items:
        raise ValueError(
            f"factors {W.shape}, {H.shape} do not match a {Y.n_users} x {Y.n_items} matrix"
        )


def as_sequence_of_tokens(tokens: Optional[Sequence], n, prefix):
    if tokens is not None:
        return tuple(str(t) for t in tokens)
    return tuple(f"{prefix}{k}" for k in range(n))
