import os
import subprocess
import sys

import numpy as np
import pytest

from nbmf import kernels

pytestmark = pytest.mark.skipif("numba" not in kernels.available_backends(),
                                reason="numba backend not installed")


@pytest.fixture
def problem():
    rng = np.random.default_rng(11)
    U, I, K, nnz = 37, 29, 4, 300
    flat = rng.choice(U * I, size=nnz, replace=False)
    rows, cols = flat // I, flat % I
    order = np.lexsort((cols, rows))
    return dict(rows=rows[order], cols=cols[order], y=rng.integers(1, 9, nnz).astype(float),
                A=rng.gamma(1.0, size=(U, K)), B=rng.gamma(1.0, size=(I, K)), U=U, I=I)


def test_backends_agree(problem):
    p = problem
    fast, ref = kernels.get("numba"), kernels.get("numpy")
    elw, elh = np.log(p["A"]), np.log(p["B"])
    np.testing.assert_allclose(fast.sparse_dot(p["rows"], p["cols"], p["A"], p["B"]),
                               ref.sparse_dot(p["rows"], p["cols"], p["A"], p["B"]), rtol=1e-13)
    np.testing.assert_allclose(fast.scatter_rows(p["rows"], p["cols"], p["y"], p["B"], p["U"]),
                               ref.scatter_rows(p["rows"], p["cols"], p["y"], p["B"], p["U"]), rtol=1e-13)
    phi = ref.compute_phi(p["rows"], p["cols"], elw, elh)
    np.testing.assert_allclose(fast.compute_phi(p["rows"], p["cols"], elw, elh), phi, rtol=1e-13)
    np.testing.assert_allclose(fast.scatter_add(p["cols"], p["y"], phi, p["I"]),
                               ref.scatter_add(p["cols"], p["y"], phi, p["I"]), rtol=1e-13)
    assert fast.allocation_term(p["rows"], p["cols"], p["y"], phi, elw, elh) == pytest.approx(
        ref.allocation_term(p["rows"], p["cols"], p["y"], phi, elw, elh), rel=1e-13)


def test_brute_force_sparse_dot(problem, backend):
    p = problem
    out = kernels.sparse_dot(p["rows"], p["cols"], p["A"], p["B"])
    expect = [sum(p["A"][r, k] * p["B"][c, k] for k in range(p["A"].shape[1]))
              for r, c in zip(p["rows"], p["cols"])]
    np.testing.assert_allclose(out, expect, rtol=1e-13)


def test_phi_rows_are_distributions(problem, backend):
    p = problem
    phi = kernels.compute_phi(p["rows"], p["cols"], np.log(p["A"]), np.log(p["B"]))
    np.testing.assert_allclose(phi.sum(axis=1), 1.0, rtol=1e-14)
    assert np.all(phi >= 0)


def test_use_and_unknown_backend():
    previous = kernels.backend
    try:
        assert kernels.use("numpy") == "numpy"
        assert kernels.sparse_dot is kernels.get("numpy").sparse_dot
    finally:
        kernels.use(previous)
    with pytest.raises(ValueError, match="unknown or unavailable"):
        kernels.get("cuda")


def test_env_flag_selects_backend():
    env = dict(os.environ, NBMF_BACKEND="numpy")
    out = subprocess.run([sys.executable, "-c", "from nbmf import kernels; print(kernels.backend)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
