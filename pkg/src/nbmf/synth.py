"""Sampling planted datasets from the Poisson-gamma form of the model.

Random streams come from numpy's Philox4x64 counter-based generator. Every
row of W, H and of the exposure/count matrix gets its own substream keyed by
(seed, block, row), so rows can be generated in any order or in parallel:

    W row u      -> SeedSequence([seed, 0, u])
    H row i      -> SeedSequence([seed, 1, i])
    A, Y row u   -> SeedSequence([seed, 2, u])

Gamma variates use Marsaglia-Tsang squeeze-and-reject (shape >= 1) with the
x * U**(1/shape) boost below 1. Poisson variates use sequential inversion
for means below 10 and Hormann's transformed rejection (PTRS) above.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import HyperParams, SparseCountMatrix
from .specfun import gammaln

_POISSON_INVERSION_MAX = 10.0


def make_rng(*key):
    """Philox generator seeded from an integer key tuple."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(key))))


@dataclass(frozen=True)
class SynthSpec:
    U: int
    I: int
    K_true: int
    hyper: HyperParams = field(default_factory=HyperParams)
    seed: int = 0

    def __post_init__(self):
        if min(self.U, self.I, self.K_true) < 1:
            raise ValueError("dimensions must be at least 1")


def _marsaglia_tsang(shape, rng):
    """Gamma(shape, 1) draws for an array of shapes >= 1."""
    d = shape - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    out = np.empty_like(d)
    todo = np.arange(d.size)
    while todo.size:
        x = rng.standard_normal(todo.size)
        v = (1.0 + c[todo] * x) ** 3
        u = rng.uniform(size=todo.size)
        ok = v > 0
        with np.errstate(invalid="ignore", divide="ignore"):
            logv = np.log(np.where(ok, v, 1.0))
        x2 = x * x
        accept = ok & ((u < 1.0 - 0.0331 * x2 * x2)
                       | (np.log(u) < 0.5 * x2 + d[todo] * (1.0 - v + logv)))
        out[todo[accept]] = d[todo[accept]] * v[accept]
        todo = todo[~accept]
    return out


def gamma_variates(shape, rate, rng, size=None):
    """Gamma draws with the given shape and rate (mean shape / rate)."""
    shape, rate = np.broadcast_arrays(np.asarray(shape, dtype=np.float64),
                                      np.asarray(rate, dtype=np.float64))
    if size is not None:
        shape = np.broadcast_to(shape, size)
        rate = np.broadcast_to(rate, size)
    if np.any(shape <= 0) or np.any(rate <= 0):
        raise ValueError("gamma shape and rate must be positive")
    flat_shape = shape.ravel()
    boosted = flat_shape < 1.0
    draws = _marsaglia_tsang(np.where(boosted, flat_shape + 1.0, flat_shape), rng)
    if np.any(boosted):
        u = rng.uniform(size=int(boosted.sum()))
        draws[boosted] *= u ** (1.0 / flat_shape[boosted])
    out = draws.reshape(shape.shape) / rate
    return out if out.ndim else float(out)


def _poisson_inversion(lam, rng):
    u = rng.uniform(size=lam.size)
    k = np.zeros(lam.size, dtype=np.int64)
    p = np.exp(-lam)
    cdf = p.copy()
    active = u > cdf
    # The cdf can saturate just below u through rounding; cap the search.
    for step in range(1, 200):
        if not active.any():
            break
        k[active] += 1
        p[active] *= lam[active] / step
        cdf[active] += p[active]
        active &= u > cdf
    return k


def _poisson_ptrs(lam, rng):
    slam = np.sqrt(lam)
    loglam = np.log(lam)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    inv_alpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)
    out = np.empty(lam.size, dtype=np.int64)
    todo = np.arange(lam.size)
    while todo.size:
        U = rng.uniform(size=todo.size) - 0.5
        V = rng.uniform(size=todo.size)
        us = 0.5 - np.abs(U)
        at, bt = a[todo], b[todo]
        k = np.floor((2.0 * at / us + bt) * U + lam[todo] + 0.43)
        quick = (us >= 0.07) & (V <= vr[todo])
        reject = (k < 0) | ((us < 0.013) & (V > us))
        kk = np.maximum(k, 0.0)
        with np.errstate(divide="ignore"):
            slow = (np.log(V) + np.log(inv_alpha[todo]) - np.log(at / (us * us) + bt)
                    <= -lam[todo] + kk * loglam[todo] - gammaln(kk + 1.0))
        accept = quick | (~reject & slow)
        out[todo[accept]] = k[accept].astype(np.int64)
        todo = todo[~accept]
    return out


def poisson_variates(mean, rng, size=None):
    """Poisson draws; a zero mean always yields zero."""
    mean = np.asarray(mean, dtype=np.float64)
    if size is not None:
        mean = np.broadcast_to(mean, size)
    if np.any(mean < 0) or not np.all(np.isfinite(mean)):
        raise ValueError("Poisson mean must be finite and nonnegative")
    flat = mean.ravel()
    out = np.zeros(flat.size, dtype=np.int64)
    small = (flat > 0) & (flat < _POISSON_INVERSION_MAX)
    large = flat >= _POISSON_INVERSION_MAX
    if small.any():
        out[small] = _poisson_inversion(flat[small], rng)
    if large.any():
        out[large] = _poisson_ptrs(flat[large], rng)
    out = out.reshape(mean.shape)
    return out if out.ndim else int(out)


def sample_gamma(shape, rate, rng):
    return float(gamma_variates(shape, rate, rng))


def sample_poisson(mean, rng):
    return int(poisson_variates(mean, rng))


def sample_counts(mean, alpha, rng):
    """Exposures a ~ Gamma(alpha, alpha) and counts y ~ Poisson(a * mean).

    The counts are marginally NB with the given mean and dispersion.
    ``alpha=None`` skips the exposures (Poisson counts, a = 1).
    """
    mean = np.asarray(mean, dtype=np.float64)
    if alpha is None:
        a = np.ones_like(mean)
    else:
        a = gamma_variates(alpha, alpha, rng, size=mean.shape)
    return a, poisson_variates(a * mean, rng)


def generate(spec: SynthSpec):
    """Draw (Y, W_true, H_true, A_true) from the generative model.

    In PF mode every exposure is 1 and Y is Poisson(W H^T).
    """
    hyper = spec.hyper
    K = spec.K_true
    W = np.vstack([gamma_variates(hyper.alpha_w, hyper.beta_w, make_rng(spec.seed, 0, u), size=K)
                   for u in range(spec.U)])
    H = np.vstack([gamma_variates(hyper.alpha_h, hyper.beta_h, make_rng(spec.seed, 1, i), size=K)
                   for i in range(spec.I)])
    mean = W @ H.T
    A = np.ones((spec.U, spec.I))
    Y = np.zeros((spec.U, spec.I), dtype=np.int64)
    for u in range(spec.U):
        A[u], Y[u] = sample_counts(mean[u], None if hyper.pf else hyper.alpha,
                                   make_rng(spec.seed, 2, u))
    return SparseCountMatrix.from_dense(Y), W, H, A
