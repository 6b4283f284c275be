import numpy as np
import pytest

from nbmf import kernels
from nbmf.core import SparseCountMatrix


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    """Run the test once per available kernel backend."""
    previous = kernels.backend
    kernels.use(request.param)
    yield request.param
    kernels.use(previous)


def random_counts(U, I, rng, mean=1.5, density=0.6):
    """Random count matrix with every row and column supported."""
    dense = rng.poisson(mean, size=(U, I)) * (rng.uniform(size=(U, I)) < density)
    dense[np.arange(U), rng.integers(0, I, size=U)] += 1
    dense[rng.integers(0, U, size=I), np.arange(I)] += 1
    return SparseCountMatrix.from_dense(dense)


@pytest.fixture
def small_counts():
    return random_counts(6, 5, np.random.default_rng(3))


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, from the real test outcomes."""
    lines = {}
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if "test_acceptance.py::test_criterion_" not in getattr(rep, "nodeid", ""):
                continue
            if rep.when != "call" and outcome == "passed":
                continue
            name = rep.nodeid.split("::")[-1]
            detail = "; ".join(v for k, v in rep.user_properties if k == "detail")
            status = "PASS" if outcome == "passed" else "FAIL"
            lines[name] = f"{status}  {name}  {detail}"
    if lines:
        terminalreporter.section("acceptance criteria")
        for name in sorted(lines):
            terminalreporter.write_line(lines[name])
