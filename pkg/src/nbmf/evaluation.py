"""Recommendation lists and NDCG scoring against held-out counts."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .core import SparseCountMatrix

_LN2 = math.log(2.0)


class RelevanceKind(str, enum.Enum):
    A = "A"  # raw test count
    B = "B"  # 1[test count >= s] on the test support


@dataclass(frozen=True)
class RelevanceSpec:
    kind: RelevanceKind = RelevanceKind.A
    threshold: int = 0

    def __post_init__(self):
        kind = self.kind.value if isinstance(self.kind, RelevanceKind) else str(self.kind).upper()
        object.__setattr__(self, "kind", RelevanceKind(kind))
        if self.threshold < 0:
            raise ValueError("threshold must be nonnegative")

    def apply(self, test_counts):
        """Relevance of each item given its test counts (zeros stay zero)."""
        counts = np.asarray(test_counts, dtype=np.float64)
        if self.kind is RelevanceKind.A:
            return counts
        return ((counts > 0) & (counts >= self.threshold)).astype(np.float64)


class NoRelevantItems(ValueError):
    """A user, or every user, has zero total relevance; NDCG is undefined."""


@dataclass
class EvaluationResult:
    mean_ndcg: float
    per_user: dict  # user index -> NDCG
    n_excluded: int


def rank_items(scores, consumed=()):
    """Item indices by decreasing score, consumed items moved to the end.

    Ties go to the lower item index; consumed items keep ascending order.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    is_consumed = np.zeros(scores.size, dtype=bool)
    is_consumed[np.asarray(list(consumed), dtype=np.int64)] = True
    idx = np.arange(scores.size)
    # lexsort: last key is primary.
    order = np.lexsort((idx, -scores, is_consumed))
    tail = order[is_consumed[order]]
    return np.concatenate([order[~is_consumed[order]], np.sort(tail)])


def _log_gains(rel):
    """log(2**rel - 1) for rel > 0."""
    rel = np.asarray(rel, dtype=np.float64)
    return rel * _LN2 + np.log(-np.expm1(-rel * _LN2))


def _discounts(n):
    return np.log2(np.arange(2, n + 2, dtype=np.float64))


def dcg(ranking, relevance):
    """DCG of a full ranking; ``relevance`` is indexed by item."""
    rel = np.asarray(relevance, dtype=np.float64)[np.asarray(ranking)]
    if np.any(rel < 0):
        raise ValueError("relevance must be nonnegative")
    with np.errstate(over="ignore"):
        gains = np.expm1(rel * _LN2)
    if not np.all(np.isfinite(gains)):
        raise OverflowError("relevance too large: 2**rel overflows, use ndcg")
    return float((gains / _discounts(rel.size)).sum())


def ndcg(ranking, relevance, cutoff=None):
    """DCG of ``ranking`` divided by the DCG of the ideal ordering.

    Gains are combined in log space with a shared shift, so very large
    relevances still give a finite ratio. ``cutoff`` keeps only the first
    ``cutoff`` ranks of both lists.
    """
    rel = np.asarray(relevance, dtype=np.float64)
    if np.any(rel < 0):
        raise ValueError("relevance must be nonnegative")
    if not np.any(rel > 0):
        raise NoRelevantItems("no item has positive relevance")
    ranked = rel[np.asarray(ranking)]
    ideal = np.sort(rel)[::-1]
    if cutoff is not None:
        if cutoff < 1:
            raise ValueError("cutoff must be at least 1")
        ranked, ideal = ranked[:cutoff], ideal[:cutoff]
    disc = np.log(_discounts(ideal.size))
    pos = ranked > 0
    logt_actual = _log_gains(ranked[pos]) - disc[:ranked.size][pos]
    ipos = ideal > 0
    logt_ideal = _log_gains(ideal[ipos]) - disc[ipos]
    shift = logt_ideal.max()
    value = np.exp(logt_actual - shift).sum() / np.exp(logt_ideal - shift).sum()
    if not np.isfinite(value):
        raise OverflowError("non-finite NDCG")
    return float(min(value, 1.0))


def evaluate(scores, Y_train: SparseCountMatrix, Y_test: SparseCountMatrix,
             spec: RelevanceSpec = RelevanceSpec(), cutoff=None) -> EvaluationResult:
    """Mean NDCG over users whose test relevance is not all zero.

    ``cutoff`` truncates DCG and IDCG to the first ``cutoff`` ranks; None
    scores the whole list.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if Y_train.shape != Y_test.shape or scores.shape != Y_train.shape:
        raise ValueError(
            f"frame mismatch: scores {scores.shape}, train {Y_train.shape}, test {Y_test.shape}"
        )
    train_rows = _row_slices(Y_train)
    test_rows = _row_slices(Y_test)
    per_user = {}
    excluded = 0
    for u in range(Y_train.n_users):
        lo, hi = test_rows[u]
        test_counts = np.zeros(Y_test.n_items)
        test_counts[Y_test.cols[lo:hi]] = Y_test.counts[lo:hi]
        rel = spec.apply(test_counts)
        if not np.any(rel > 0):
            excluded += 1
            continue
        tlo, thi = train_rows[u]
        ranking = rank_items(scores[u], Y_train.cols[tlo:thi])
        per_user[u] = ndcg(ranking, rel, cutoff)
    if not per_user:
        raise NoRelevantItems("no user has positive test relevance")
    return EvaluationResult(float(np.mean(list(per_user.values()))), per_user, excluded)


def _row_slices(Y: SparseCountMatrix):
    bounds = np.searchsorted(Y.rows, np.arange(Y.n_users + 1))
    return list(zip(bounds[:-1], bounds[1:]))
