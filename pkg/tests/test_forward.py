import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bdsde.errors import InvalidArgumentError, NumericOverflowError
from bdsde.forward import euler_step, forward_strong_error, simulate_forward, step_index
from bdsde.noise import brownian_bridge_refine, sample_noise
from bdsde.presets import PRESETS
from bdsde.problem import make_uniform_partition

from conftest import make_spec


def test_pure_noise_step():
    c = make_spec().coefficients
    assert euler_step(np.array([0.0]), 0.0, 0.1, np.array([0.3]), c)[0] == pytest.approx(0.3)


def test_deterministic_euler_step():
    c = make_spec(b=lambda t, x: x, sigma=lambda t, x: 0 * x).coefficients
    assert euler_step(np.array([1.0]), 0.0, 0.5, np.array([0.0]), c)[0] == 1.5


def test_multiplicative_noise_step():
    c = make_spec(sigma=lambda t, x: x).coefficients
    assert euler_step(np.array([2.0]), 0.0, 0.01, np.array([0.1]), c)[0] == pytest.approx(2.2)


def test_overflow_reports_path_and_step():
    c = make_spec(b=lambda t, x: x * 1e300).coefficients
    with pytest.raises(NumericOverflowError) as err:
        euler_step(np.array([[0.0], [1e10]]), 0.0, 1.0, np.zeros((2, 1)), c, step=3, path_offset=7)
    assert err.value.path == 8 and err.value.step == 3


def test_no_dynamics_keeps_x0():
    spec = make_spec(sigma=lambda t, x: 0 * x, x0=1.25)
    p = make_uniform_partition(1.0, 5)
    fw = simulate_forward(spec, p, sample_noise(p, 1, 1, 20, 0))
    assert np.all(fw.values == 1.25)


def test_brownian_paths_telescope():
    p = make_uniform_partition(1.0, 6)
    noise = sample_noise(p, 1, 1, 30, 1)
    fw = simulate_forward(make_spec(), p, noise)
    assert np.array_equal(fw.values[:, 1:, 0], np.cumsum(noise.dW[:, :, 0], axis=1))
    assert np.all(fw.values[:, 0] == 0)


def test_geometric_mean_matches_product_formula():
    spec = PRESETS["geometric"].spec()
    p = make_uniform_partition(1.0, 8)
    M = 100_000
    xT = simulate_forward(spec, p, sample_noise(p, 1, 1, M, 2)).values[:, -1, 0]
    exact = np.prod(1 + 0.1 * p.steps)
    assert abs(xT.mean() - exact) < 5 * xT.std(ddof=1) / np.sqrt(M)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(1, 12))
def test_recursion_residual_is_zero(seed, n):
    spec = PRESETS["geometric"].spec()
    p = make_uniform_partition(1.0, n)
    fw = simulate_forward(spec, p, sample_noise(p, 1, 1, 16, seed))
    assert fw.recursion_residual(spec.coefficients) == 0.0
    assert np.all(fw.values[:, 0] == spec.x0)


def test_step_index_examples():
    p = make_uniform_partition(1.0, 4)
    assert step_index(p, 0.5) == 2
    assert step_index(p, 0.3) == 1
    assert step_index(p, 1.0) == 4
    with pytest.raises(InvalidArgumentError):
        step_index(p, 1.5)


def test_step_process_value():
    p = make_uniform_partition(1.0, 4)
    fw = simulate_forward(make_spec(), p, sample_noise(p, 1, 1, 3, 3))
    assert np.array_equal(fw.step_process(1, 0.3), fw.values[1, 1])
    assert np.array_equal(fw.step_process(2, 1.0), fw.values[2, 4])


def test_coupling_consistency_for_constant_coefficients():
    spec = make_spec(b=lambda t, x: np.full_like(x, 0.3), sigma=lambda t, x: np.full_like(x, 0.7))
    coarse = make_uniform_partition(1.0, 4)
    fine = make_uniform_partition(1.0, 16)
    g = sample_noise(coarse, 1, 1, 50, 4)
    xc = simulate_forward(spec, coarse, g).values
    xf = simulate_forward(spec, fine, brownian_bridge_refine(g, fine)).values
    assert np.allclose(xf[:, ::4], xc, rtol=0, atol=1e-13)


def test_strong_error_zero_without_dynamics():
    spec = make_spec(sigma=lambda t, x: 0 * x, x0=1.0)
    rep = forward_strong_error(spec, [2, 4], 100, 0)
    assert np.all(rep.sup_error == 0) and rep.fit is None


def test_strong_error_of_deterministic_growth():
    spec = make_spec(b=lambda t, x: x, sigma=lambda t, x: 0 * x, x0=1.0)
    levels = [4, 8, 16]
    rep = forward_strong_error(spec, levels, 4, 0)
    nref = 4 * levels[-1]
    ref = (1 + 1 / nref) ** np.arange(nref + 1)
    tf = np.linspace(0, 1, nref + 1)
    for k, n in enumerate(levels):
        h = 1 / n
        i = np.minimum((tf * n + 1e-12).astype(int), n - 1)
        interp = (1 + h) ** i * (1 + (tf - i * h))
        assert rep.sup_error[k] == pytest.approx(np.max((interp - ref) ** 2), rel=1e-9)
    assert 1.8 <= rep.fit.slope <= 2.2


def test_increment_statistic_grows_at_most_linearly():
    rep = forward_strong_error(PRESETS["geometric"].spec(), [4, 8, 16], 4000, 5)
    ratio = rep.increment_stat / rep.mesh
    assert ratio.max() / ratio.min() < 2.0
