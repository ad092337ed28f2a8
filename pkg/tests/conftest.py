import sys

import numpy as np
import pytest


def random_instance(rng, L=8, N=5, J=2, noise=0.0, coef=(0.2, 1.0)):
    """Unit-norm Gaussian dictionary, random support and positive coefficients."""
    A = rng.standard_normal((L, N))
    A /= np.linalg.norm(A, axis=0)
    S = np.sort(rng.choice(N, size=J, replace=False))
    x = np.zeros(N)
    x[S] = rng.uniform(*coef, size=J)
    e = noise * rng.standard_normal(L)
    return A, x, e, S


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def identity_problem():
    from nnsparse import Problem

    return Problem(np.eye(2), np.array([1.0, 0.0]), 0.5)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(mod.RESULTS, key=int):
        terminalreporter.write_line(mod.RESULTS[key])
