"""Shared builders for the test suite."""

import numpy as np
import pytest

from bdsde.problem import CoefficientSet, ProblemSpec, TerminalCondition


def zero(t, x, *rest):
    return np.zeros(x.shape[0])


def make_spec(b=None, sigma=None, f=None, g=None, h=None, K=1.0, x0=0.0, T=1.0):
    """One-dimensional problem; omitted coefficients are b = 0, sigma = 1, f = g = 0, h(x) = x."""
    coeffs = CoefficientSet(
        b or (lambda t, x: np.zeros_like(x)),
        sigma or (lambda t, x: np.ones_like(x)),
        f or zero,
        g or zero,
        K,
    )
    return ProblemSpec(coeffs, TerminalCondition(h=h or (lambda x: x[:, 0])), d=1, ell=1, T=T,
                       x0=np.array([x0]))


@pytest.fixture
def spec_factory():
    return make_spec


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
