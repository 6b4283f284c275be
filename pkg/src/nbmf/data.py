"""Count-triplet ingestion, dataset filtering, binarization and splitting.

Triplet files are UTF-8 text with one ``user<TAB>item<TAB>count`` record
per line.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SparseCountMatrix, as_sequence_of_tokens


class TripletParseError(ValueError):
    pass


@dataclass(frozen=True)
class SplitResult:
    Y_train: SparseCountMatrix
    Y_test: SparseCountMatrix
    split_seed: int


def load_triplets(path, users=None, items=None) -> SparseCountMatrix:
    """Read a triplet file into a sparse count matrix.

    Tokens get dense indices in order of first appearance, unless fixed
    ``users``/``items`` vocabularies are given, in which case the matrix is
    built in that frame and unknown tokens are an error. Repeated
    (user, item) pairs have their counts summed.
    """
    fixed = users is not None or items is not None
    user_index = {}
    item_index = {}
    if users is not None:
        user_index = {tok: k for k, tok in enumerate(users)}
    if items is not None:
        item_index = {tok: k for k, tok in enumerate(items)}
    totals = {}
    with open(path, encoding="utf-8", newline="\n") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise TripletParseError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
            user, item, raw = parts
            try:
                count = int(raw)
            except ValueError:
                raise TripletParseError(f"{path}:{lineno}: count {raw!r} is not an integer") from None
            if count <= 0:
                raise TripletParseError(f"{path}:{lineno}: count must be positive, got {count}")
            u = _lookup(user_index, user, users is not None, path, lineno, "user")
            i = _lookup(item_index, item, items is not None, path, lineno, "item")
            totals[(u, i)] = totals.get((u, i), 0) + count
    if not totals and not fixed:
        raise TripletParseError(f"{path}: no observations")
    user_tokens = tuple(users) if users is not None else tuple(user_index)
    item_tokens = tuple(items) if items is not None else tuple(item_index)
    return SparseCountMatrix.from_entries(
        len(user_tokens), len(item_tokens),
        ((u, i, c) for (u, i), c in totals.items()),
        user_tokens, item_tokens,
    )


def _lookup(index, token, frozen, path, lineno, kind):
    k = index.get(token)
    if k is None:
        if frozen:
            raise TripletParseError(f"{path}:{lineno}: {kind} {token!r} is not in the frame")
        k = index[token] = len(index)
    return k


def write_triplets(Y: SparseCountMatrix, path):
    users = as_sequence_of_tokens(Y.users, Y.n_users, "u")
    items = as_sequence_of_tokens(Y.items, Y.n_items, "i")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for u, i, c in Y.entries:
            fh.write(f"{users[u]}\t{items[i]}\t{c}\n")


def write_vocab(tokens, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for tok in tokens:
            fh.write(f"{tok}\n")


def read_vocab(path):
    with open(path, encoding="utf-8", newline="\n") as fh:
        return tuple(line.rstrip("\n") for line in fh if line.rstrip("\n"))


def subset(Y: SparseCountMatrix, keep_users, keep_items) -> SparseCountMatrix:
    """Restrict Y to the given user and item masks and recompact indices."""
    keep_users = np.asarray(keep_users, dtype=bool)
    keep_items = np.asarray(keep_items, dtype=bool)
    if not keep_users.any() or not keep_items.any():
        raise ValueError("empty after filtering")
    new_u = np.cumsum(keep_users) - 1
    new_i = np.cumsum(keep_items) - 1
    mask = keep_users[Y.rows] & keep_items[Y.cols]
    users = None if Y.users is None else tuple(t for t, k in zip(Y.users, keep_users) if k)
    items = None if Y.items is None else tuple(t for t, k in zip(Y.items, keep_items) if k)
    return SparseCountMatrix(int(keep_users.sum()), int(keep_items.sum()),
                             new_u[Y.rows[mask]], new_i[Y.cols[mask]], Y.counts[mask],
                             users, items)


def filter_dataset(Y: SparseCountMatrix, min_items_per_user=20, min_users_per_item=50):
    """Drop users with too few distinct items and items with too few users.

    Users and items are pruned alternately until neither pass removes
    anything, so the result satisfies both thresholds.
    """
    if min_items_per_user < 1 or min_users_per_item < 1:
        raise ValueError("thresholds must be at least 1")
    keep_users = np.ones(Y.n_users, dtype=bool)
    keep_items = np.ones(Y.n_items, dtype=bool)
    while True:
        live = keep_users[Y.rows] & keep_items[Y.cols]
        user_deg = np.bincount(Y.rows[live], minlength=Y.n_users)
        new_users = keep_users & (user_deg >= min_items_per_user)
        live = new_users[Y.rows] & keep_items[Y.cols]
        item_deg = np.bincount(Y.cols[live], minlength=Y.n_items)
        new_items = keep_items & (item_deg >= min_users_per_item)
        if np.array_equal(new_users, keep_users) and np.array_equal(new_items, keep_items):
            break
        keep_users, keep_items = new_users, new_items
        if not keep_users.any() or not keep_items.any():
            raise ValueError("empty after filtering")
    return subset(Y, keep_users, keep_items)


def binarize(Y: SparseCountMatrix) -> SparseCountMatrix:
    return Y.with_counts(np.ones_like(Y.counts))


def split_train_test(Y: SparseCountMatrix, fraction=0.8, seed=0) -> SplitResult:
    """Random partition of the nonzeros; floor(fraction * nnz) go to train."""
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    if Y.nnz < 2:
        raise ValueError("need at least 2 nonzeros to split")
    order = np.random.Generator(np.random.Philox(seed)).permutation(Y.nnz)
    n_train = int(np.floor(fraction * Y.nnz))
    train_idx, test_idx = order[:n_train], order[n_train:]

    def part(idx):
        return SparseCountMatrix(Y.n_users, Y.n_items, Y.rows[idx], Y.cols[idx], Y.counts[idx],
                                 Y.users, Y.items)

    return SplitResult(part(train_idx), part(test_idx), seed)


def cumulative_histogram(Y: SparseCountMatrix, thresholds=None):
    """Fraction of nonzero counts that are >= s, for each threshold s."""
    if Y.nnz == 0:
        raise ValueError("no nonzero counts")
    if thresholds is None:
        thresholds = np.arange(1, int(Y.counts.max()) + 1)
    thresholds = np.asarray(thresholds)
    sorted_counts = np.sort(Y.counts)
    at_least = Y.nnz - np.searchsorted(sorted_counts, thresholds, side="left")
    return thresholds, at_least / Y.nnz
