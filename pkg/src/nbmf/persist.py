"""Model directories.

A model directory holds

    meta          key=value lines: U, I, K, method, mode, hyperparameters, ...
    W.csv, H.csv  one row per user / item, comma separated, no header
    users.txt     user token per line, in index order
    items.txt     item token per line
    q_a_mean.csv  optional, ``user,item,mean`` rows of exposure posterior
                  means on the training nonzeros (variational models only)

Floats are written with 17 significant digits so they read back bit-exact.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import HyperParams, Mode, as_sequence_of_tokens
from .data import read_vocab, write_vocab

_HYPER_KEYS = ("alpha", "alpha_w", "beta_w", "alpha_h", "beta_h")


@dataclass
class FittedModel:
    W: np.ndarray
    H: np.ndarray
    method: str
    hyper: HyperParams
    binarized: bool = False
    users: Optional[tuple] = None
    items: Optional[tuple] = None
    exposure: Optional[np.ndarray] = None  # (n, 3) rows of user, item, mean
    extra: dict = field(default_factory=dict)

    @property
    def K(self):
        return self.W.shape[1]


def _fmt(x):
    return format(float(x), ".17g")


def _write_matrix(M, path):
    with open(path, "w", newline="\n") as fh:
        for row in np.atleast_2d(M):
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _read_matrix(path, ncols=None):
    with open(path) as fh:
        rows = [[float(v) for v in line.split(",")] for line in fh if line.strip()]
    M = np.array(rows, dtype=np.float64)
    if ncols is not None and M.size == 0:
        M = M.reshape(0, ncols)
    return M


def save_model(model: FittedModel, directory):
    os.makedirs(directory, exist_ok=True)
    U, K = model.W.shape
    I = model.H.shape[0]
    meta = {
        "U": U,
        "I": I,
        "K": K,
        "method": model.method,
        "mode": model.hyper.mode.value,
        **{k: _fmt(getattr(model.hyper, k)) for k in _HYPER_KEYS},
        "binarized": "true" if model.binarized else "false",
    }
    for k in sorted(model.extra):
        meta[k] = model.extra[k]
    with open(os.path.join(directory, "meta"), "w", newline="\n") as fh:
        for k, v in meta.items():
            fh.write(f"{k}={v}\n")
    _write_matrix(model.W, os.path.join(directory, "W.csv"))
    _write_matrix(model.H, os.path.join(directory, "H.csv"))
    write_vocab(as_sequence_of_tokens(model.users, U, "u"), os.path.join(directory, "users.txt"))
    write_vocab(as_sequence_of_tokens(model.items, I, "i"), os.path.join(directory, "items.txt"))
    qa_path = os.path.join(directory, "q_a_mean.csv")
    if model.exposure is not None:
        with open(qa_path, "w", newline="\n") as fh:
            for u, i, m in model.exposure:
                fh.write(f"{int(u)},{int(i)},{_fmt(m)}\n")
    elif os.path.exists(qa_path):
        os.remove(qa_path)


def read_meta(directory):
    meta = {}
    with open(os.path.join(directory, "meta")) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"{directory}/meta:{lineno}: expected key=value")
            meta[key] = value
    return meta


def load_model(directory) -> FittedModel:
    meta = read_meta(directory)
    try:
        U, I, K = int(meta["U"]), int(meta["I"]), int(meta["K"])
        hyper = HyperParams(**{k: float(meta[k]) for k in _HYPER_KEYS}, mode=Mode(meta["mode"]))
        method = meta["method"]
    except KeyError as exc:
        raise ValueError(f"{directory}/meta is missing key {exc}") from None
    W = _read_matrix(os.path.join(directory, "W.csv"), K)
    H = _read_matrix(os.path.join(directory, "H.csv"), K)
    if W.shape != (U, K) or H.shape != (I, K):
        raise ValueError(f"{directory}: factor files do not match meta ({U}, {I}, {K})")
    users = read_vocab(os.path.join(directory, "users.txt"))
    items = read_vocab(os.path.join(directory, "items.txt"))
    exposure = None
    qa_path = os.path.join(directory, "q_a_mean.csv")
    if os.path.exists(qa_path):
        exposure = _read_matrix(qa_path, 3)
    known = {"U", "I", "K", "method", "mode", "binarized", *_HYPER_KEYS}
    extra = {k: v for k, v in meta.items() if k not in known}
    return FittedModel(W, H, method, hyper, meta.get("binarized") == "true",
                       users, items, exposure, extra)
