"""Bayesian NBMF by coordinate-ascent variational inference.

Model, with K latent factors:

    w_uk ~ Gamma(alpha_w, beta_w),   h_ik ~ Gamma(alpha_h, beta_h)
    a_ui ~ Gamma(alpha, alpha)
    c_uik ~ Poisson(a_ui w_uk h_ik),  y_ui = sum_k c_uik

and a fully factorized posterior over C, A, W and H. One sweep updates the
allocations on the nonzeros, the exposures, W, H and then beta_h, each to its
closed-form optimum, so the ELBO never decreases. PF mode fixes every
exposure at 1 and skips its update.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .core import (
    DEFAULT_DENSE_BUDGET,
    ExposurePosterior,
    FitTrace,
    GammaVariationalMatrix,
    HyperParams,
    NumericalError,
    SparseCountMatrix,
    VariationalState,
)
from .specfun import digamma, gammaln


@dataclass(frozen=True)
class CAVIConfig:
    K: int
    hyper: HyperParams = field(default_factory=HyperParams)
    max_iters: int = 1000
    rel_tol: float = 1e-5
    seed: int = 0
    learn_beta_h: bool = True
    dense_budget: int = DEFAULT_DENSE_BUDGET

    def __post_init__(self):
        if int(self.K) < 1:
            raise ValueError("K must be at least 1")
        if not 0 < self.rel_tol < 1:
            raise ValueError("rel_tol must lie in (0, 1)")
        if int(self.max_iters) < 1:
            raise ValueError("max_iters must be positive")


def init_state(Y: SparseCountMatrix, config: CAVIConfig) -> VariationalState:
    """Prior shapes plus Uniform(0, 1) jitter, prior rates."""
    hyper = config.hyper
    K = config.K
    rng = np.random.Generator(np.random.Philox(config.seed))
    shape_w = hyper.alpha_w + rng.uniform(size=(Y.n_users, K))
    shape_h = hyper.alpha_h + rng.uniform(size=(Y.n_items, K))
    q_w = GammaVariationalMatrix(shape_w, np.full_like(shape_w, hyper.beta_w))
    q_h = GammaVariationalMatrix(shape_h, np.full_like(shape_h, hyper.beta_h))
    phi = kernels.compute_phi(Y.rows, Y.cols, q_w.mean_log, q_h.mean_log)
    q_a = None
    if not hyper.pf:
        q_a = ExposurePosterior(Y, hyper.alpha, q_w.mean, q_h.mean, config.dense_budget)
    return VariationalState(q_w, q_h, q_a, phi, hyper)


def update_phi(state: VariationalState, Y: SparseCountMatrix, u, i):
    """Allocation probabilities of the count y_ui over the K factors."""
    if Y.find(u, i) < 0:
        raise ValueError(f"allocations exist only for nonzero entries; y[{u}, {i}] = 0")
    logits = state.q_w.mean_log[u] + state.q_h.mean_log[i]
    p = np.exp(logits - logits.max())
    return p / p.sum()


def update_phi_all(state: VariationalState, Y: SparseCountMatrix):
    return kernels.compute_phi(Y.rows, Y.cols, state.q_w.mean_log, state.q_h.mean_log)


def update_qa(state: VariationalState, Y: SparseCountMatrix, hyper: HyperParams):
    """Exposure posterior Gamma(alpha + y, alpha + sum_k <w><h>); None in PF mode."""
    if hyper.pf:
        return None
    budget = state.q_a.dense_budget if state.q_a is not None else DEFAULT_DENSE_BUDGET
    return ExposurePosterior(Y, hyper.alpha, state.q_w.mean, state.q_h.mean, budget)


def _exposure_sums_over_items(state, B):
    if state.q_a is None:
        return np.broadcast_to(B.sum(axis=0), (state.q_w.shape.shape[0], B.shape[1]))
    return state.q_a.weighted_item_sums(B)


def _exposure_sums_over_users(state, A):
    if state.q_a is None:
        return np.broadcast_to(A.sum(axis=0), (state.q_h.shape.shape[0], A.shape[1]))
    return state.q_a.weighted_user_sums(A)


def update_qw(state: VariationalState, Y: SparseCountMatrix, hyper: HyperParams):
    shape = hyper.alpha_w + kernels.scatter_add(Y.rows, Y.values, state.phi, Y.n_users)
    rate = hyper.beta_w + _exposure_sums_over_items(state, state.q_h.mean)
    return GammaVariationalMatrix(shape, rate)


def update_qh(state: VariationalState, Y: SparseCountMatrix, hyper: HyperParams):
    shape = hyper.alpha_h + kernels.scatter_add(Y.cols, Y.values, state.phi, Y.n_items)
    rate = hyper.beta_h + _exposure_sums_over_users(state, state.q_w.mean)
    return GammaVariationalMatrix(shape, rate)


def update_beta_h(state: VariationalState, hyper: HyperParams):
    """ELBO-maximizing H prior rate: alpha_h over the average posterior mean of h."""
    Eh = state.q_h.mean
    total = float(Eh.sum())
    if not (np.isfinite(total) and total > 0):
        raise NumericalError("posterior means of H sum to a non-positive value")
    return hyper.alpha_h * Eh.size / total


def _gamma_terms(q: GammaVariationalMatrix, prior_shape, prior_rate):
    """E_q[log Gamma(x; prior)] + entropy(q), summed over entries."""
    s, r = q.shape, q.rate
    prior = (prior_shape * np.log(prior_rate) - gammaln(prior_shape)
             + (prior_shape - 1.0) * q.mean_log - prior_rate * q.mean)
    entropy = s - np.log(r) + gammaln(s) + (1.0 - s) * digamma(s)
    return float((prior + entropy).sum())


def _check_finite(value, where):
    if not np.isfinite(value):
        raise NumericalError(f"non-finite ELBO contribution from {where}")
    return value


def compute_elbo(state: VariationalState, Y: SparseCountMatrix, hyper: HyperParams | None = None):
    """Evidence lower bound of the current state, constants included."""
    hyper = state.hyper if hyper is None else hyper
    q_w, q_h = state.q_w, state.q_h
    Ew, Eh = q_w.mean, q_h.mean
    y = Y.values

    # Allocations: sum_k y phi (<log w> + <log h> - log phi) - log y!
    elbo = _check_finite(
        kernels.allocation_term(Y.rows, Y.cols, y, state.phi, q_w.mean_log, q_h.mean_log)
        - float(gammaln(y + 1.0).sum()),
        "allocations",
    )

    if state.q_a is None:
        elbo -= _check_finite(float(Ew.sum(axis=0) @ Eh.sum(axis=0)), "Poisson rates")
    else:
        q_a = state.q_a
        a = q_a.alpha
        # Exposure prior + entropy + the -<a><w h> rate term. For a zero cell
        # with q(a) = Gamma(a, b) this reduces to a log(a/b) + a - (a/b)(a + yhat).
        dense = 0.0
        for sl, yhat_ref in q_a.blocks():
            b = a + yhat_ref
            yhat_cur = Ew[sl] @ Eh.T
            dense += float((a - a * np.log1p(yhat_ref / a) - (a / b) * (a + yhat_cur)).sum())
        elbo += _check_finite(dense, "exposures (all cells)")
        if Y.nnz:
            s, r = q_a.shape_nz, q_a.rate_nz
            mean_a = s / r
            mean_log_a = digamma(s) - np.log(r)
            yhat_cur = kernels.sparse_dot(Y.rows, Y.cols, Ew, Eh)
            cell = (y * mean_log_a - mean_a * yhat_cur
                    + a * np.log(a) - gammaln(a) + (a - 1.0) * mean_log_a - a * mean_a
                    + s - np.log(r) + gammaln(s) + (1.0 - s) * digamma(s))
            zero_form = a - a * np.log1p(q_a.yhat_nz / a) - (a / r) * (a + yhat_cur)
            elbo += _check_finite(float((cell - zero_form).sum()), "exposures (nonzeros)")

    elbo += _check_finite(_gamma_terms(q_w, hyper.alpha_w, hyper.beta_w), "W")
    elbo += _check_finite(_gamma_terms(q_h, hyper.alpha_h, hyper.beta_h), "H")
    return elbo


def sweep(state: VariationalState, Y: SparseCountMatrix, learn_beta_h=True):
    """One pass of the coordinate updates, in place."""
    state.phi = update_phi_all(state, Y)
    state.q_a = update_qa(state, Y, state.hyper)
    state.q_w = update_qw(state, Y, state.hyper)
    state.q_h = update_qh(state, Y, state.hyper)
    if learn_beta_h:
        state.hyper = replace(state.hyper, beta_h=update_beta_h(state, state.hyper))
    return state


def fit_cavi(Y: SparseCountMatrix, config: CAVIConfig, state: VariationalState | None = None):
    """Sweep until the relative ELBO increase falls below ``rel_tol``.

    Returns ``(state, trace)``; trace entry 0 is the ELBO at initialization.
    """
    if Y.nnz == 0:
        raise ValueError("cannot fit an empty count matrix")
    if state is None:
        state = init_state(Y, config)
    trace = FitTrace()
    prev = compute_elbo(state, Y)
    trace.append(0, prev, 0.0)
    for it in range(1, config.max_iters + 1):
        tic = time.perf_counter()
        sweep(state, Y, config.learn_beta_h)
        cur = compute_elbo(state, Y)
        trace.append(it, cur, time.perf_counter() - tic)
        if (cur - prev) / abs(prev) < config.rel_tol:
            break
        prev = cur
    return state, trace


def scale_transform(state: VariationalState, lam):
    """Rescale W by 1/lam and H by lam; the ELBO and all scores are unchanged."""
    lam = float(lam)
    if not lam > 0:
        raise ValueError("scale factor must be positive")
    hyper = replace(state.hyper, beta_w=state.hyper.beta_w * lam, beta_h=state.hyper.beta_h / lam)
    return VariationalState(
        q_w=GammaVariationalMatrix(state.q_w.shape, state.q_w.rate * lam),
        q_h=GammaVariationalMatrix(state.q_h.shape, state.q_h.rate / lam),
        q_a=None if state.q_a is None else state.q_a.scaled(lam),
        phi=state.phi,
        hyper=hyper,
    )


def posterior_means(state: VariationalState):
    return state.q_w.mean, state.q_h.mean
