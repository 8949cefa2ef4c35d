import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bdsde.errors import InvalidArgumentError, InvalidInputError, MeshTooCoarseError
from bdsde.noise import brownian_bridge_refine, sample_noise
from bdsde.problem import make_uniform_partition
from bdsde.regression import (
    RegressionSpec,
    TruncationLedger,
    fit_regression,
    lsmc_fit,
    truncate,
    truncation_ledger,
)

X = np.random.default_rng(0).normal(size=(200, 1))


@pytest.mark.parametrize("spec", [RegressionSpec(degree=0), RegressionSpec(degree=4),
                                  RegressionSpec(basis="bins", bins=7), RegressionSpec(ridge=0.3)])
def test_constants_are_reproduced(spec):
    assert np.allclose(lsmc_fit(np.full(200, 2.5), X, spec), 2.5, rtol=0, atol=1e-12)


def test_target_in_span_is_reproduced():
    y = 3 * X[:, 0] + 1
    assert np.allclose(lsmc_fit(y, X, RegressionSpec(degree=1)), y, rtol=0, atol=1e-12)


def test_rank_deficient_fit_is_minimal_norm():
    x = np.array([[-0.4], [0.3], [1.9]])
    y = np.array([1.0, -2.0, 0.5])
    at = np.linspace(-1, 2, 9).reshape(-1, 1)
    got = lsmc_fit(y, x, RegressionSpec(degree=5), predict_at=at)
    mu, sd = x.mean(), x.std()
    design = lambda v: np.vander((v[:, 0] - mu) / sd, 6, increasing=True)
    A = design(x)
    beta = A.T @ np.linalg.solve(A @ A.T, y)
    assert np.allclose(got, design(at) @ beta, rtol=0, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(scale=st.floats(0.1, 10.0), shift=st.floats(-10, 10), degree=st.integers(1, 4),
       seed=st.integers(0, 1000))
def test_affine_reparameterisation_leaves_projection_unchanged(scale, shift, degree, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(80, 1))
    y = np.sin(2 * x[:, 0]) + 0.1 * rng.normal(size=80)
    spec = RegressionSpec(degree=degree)
    a = lsmc_fit(y, x, spec)
    b = lsmc_fit(y, scale * x + shift, spec)
    assert np.allclose(a, b, rtol=0, atol=1e-9)


def test_ridge_shrinks_slope_but_not_intercept():
    y = 4 * X[:, 0] + 1
    plain = fit_regression(y, X, RegressionSpec(degree=1))
    heavy = fit_regression(y, X, RegressionSpec(degree=1, ridge=1e6))
    assert abs(heavy.coef[1]) < 1e-4 * abs(plain.coef[1])
    assert heavy.coef[0] == pytest.approx(y.mean(), abs=1e-9)


def test_non_finite_target_reports_index():
    y = np.ones(10)
    y[6] = np.nan
    with pytest.raises(InvalidInputError) as err:
        fit_regression(y, np.arange(10.0)[:, None], RegressionSpec())
    assert err.value.index == 6


@pytest.mark.parametrize("kw", [dict(degree=-1), dict(bins=0), dict(ridge=-1.0), dict(basis="splines")])
def test_spec_validation(kw):
    with pytest.raises(InvalidArgumentError):
        RegressionSpec(**kw)


# --- ledger ------------------------------------------------------------------------

def test_ledger_terminal_values():
    p = make_uniform_partition(1.0, 5)
    for C in (1.0, 1.5):
        L = truncation_ledger(p, np.full((5, 1), 0.1), C)
        assert L.c[-1] == 2 * C and L.q[-1] == C


def test_ledger_one_step_hand_value():
    p = make_uniform_partition(1.0, 10)
    dB = np.zeros((10, 1))
    dB[-1] = 0.2
    L = truncation_ledger(p, dB, 1.0)
    D = np.sqrt(1.1) / 0.9
    assert L.q[-2] == pytest.approx(D * 1.78, rel=1e-12)
    assert L.c[-2] == pytest.approx(D * 3.54, rel=1e-12)
    assert L.q[-2] == pytest.approx(2.0743, abs=1e-4) and L.c[-2] == pytest.approx(4.1253, abs=1e-4)


def test_ledger_one_step_limit_without_noise():
    for n in (10**3, 10**5):
        L = truncation_ledger(make_uniform_partition(1.0, n), np.zeros((n, 1)), 1.0)
        tol = 20.0 / n
        assert L.q[-2] == pytest.approx(1.0, abs=tol) and L.c[-2] == pytest.approx(2.0, abs=tol)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 40), C=st.floats(0.1, 1.5), seed=st.integers(0, 10**6))
def test_ledger_is_nonnegative_and_grows_backwards(n, C, seed):
    p = make_uniform_partition(1.0, n)
    if C * p.mesh >= 1:
        return
    dB = sample_noise(p, 1, 1, 1, seed).dB
    L = truncation_ledger(p, dB, C)
    assert np.all(L.c >= 0) and np.all(L.q >= 0)
    assert np.all(np.diff(L.c) <= 0) and np.all(np.diff(L.q) <= 0)


def test_per_path_ledger_shape():
    p = make_uniform_partition(1.0, 4)
    g = sample_noise(p, 1, 1, 6, 0, mode="per-path-b")
    L = truncation_ledger(p, g.dB, 1.0)
    assert L.c.shape == (6, 5)
    assert L.P(2, np.ones((6, 1))).shape == (6,)


def test_ledger_rejects_coarse_mesh():
    with pytest.raises(MeshTooCoarseError):
        truncation_ledger(make_uniform_partition(1.0, 2), np.zeros((2, 1)), 2.0)


@pytest.mark.xfail(strict=True, reason="|dB| enters the recursion multiplicatively; the sum of "
                                        "|dB_i| diverges under refinement, so the maxima keep growing")
def test_ledger_maxima_stabilise_under_refinement():
    base = sample_noise(make_uniform_partition(1.0, 8), 1, 1, 1, 0)
    maxima = []
    for n in (8, 16, 32, 64, 128):
        p = make_uniform_partition(1.0, n)
        g = base if n == 8 else brownian_bridge_refine(base, p)
        L = truncation_ledger(p, g.dB, 1.0)
        maxima.append(float(np.max(L.c + L.q)))
    assert abs(maxima[-1] / maxima[-2] - 1) <= 0.1


# --- truncate -----------------------------------------------------------------------

def _flat_ledger(bound):
    t = np.array([0.0, 1.0])
    c = np.full(2, bound)
    z = np.zeros(2)
    return TruncationLedger(t, 1.0, c, z, c[:1], z[:1], c[:1], z[:1])


def test_truncate_examples():
    L = _flat_ledger(3.0)
    assert truncate(2.0, "P", 0, np.zeros(1), L) == 2.0
    assert truncate(10.0, "P", 0, np.zeros(1), L) == 3.0
    assert truncate(-10.0, "P", 0, np.zeros(1), L) == -3.0
    with pytest.raises(InvalidArgumentError):
        truncate(1.0, "Q", 0, np.zeros(1), L)


@given(v=st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=20), kind=st.sampled_from("PRJ"))
def test_truncate_is_idempotent(v, kind):
    p = make_uniform_partition(1.0, 4)
    L = truncation_ledger(p, np.full((4, 1), 0.3), 1.0)
    x = np.linspace(-2, 2, len(v))
    once = truncate(np.array(v), kind, 1, x, L)
    assert np.array_equal(truncate(once, kind, 1, x, L), once)
