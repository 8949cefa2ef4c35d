import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bdsde.errors import InvalidArgumentError
from bdsde.presets import PRESETS
from bdsde.problem import Partition, TerminalCondition, make_uniform_partition, validate_assumptions

from conftest import make_spec


def test_uniform_partition_four_steps():
    p = make_uniform_partition(1.0, 4)
    assert np.array_equal(p.times, [0, 0.25, 0.5, 0.75, 1.0])
    assert p.mesh == 0.25


def test_uniform_partition_single_step():
    p = make_uniform_partition(2.0, 1)
    assert np.array_equal(p.times, [0, 2.0])
    assert p.mesh == 2.0


def test_uniform_partition_rejects_zero_steps():
    with pytest.raises(InvalidArgumentError):
        make_uniform_partition(1.0, 0)


@pytest.mark.parametrize("times", [[0.0, 0.5, 0.5, 1.0], [0.1, 1.0], [0.0]])
def test_partition_rejects_bad_times(times):
    with pytest.raises(InvalidArgumentError):
        Partition(np.array(times))


@given(T=st.floats(1e-3, 1e3), n=st.integers(1, 2000))
def test_partition_mesh_reconstructs_horizon(T, n):
    p = make_uniform_partition(T, n)
    assert p.mesh * n == pytest.approx(T, rel=1e-12)
    assert p.times[0] == 0 and p.times[-1] == T


def test_validation_identity_drift_passes():
    rep = validate_assumptions(make_spec(b=lambda t, x: x, h=lambda x: 0 * x[:, 0]))
    assert rep.lipschitz_ratios["drift"] == pytest.approx(1.0, rel=1e-9)
    assert "drift" not in rep.flagged


def test_validation_flags_double_drift():
    rep = validate_assumptions(make_spec(b=lambda t, x: 2 * x))
    assert rep.lipschitz_ratios["drift"] == pytest.approx(2.0, rel=1e-9)
    assert "drift" in rep.flagged


def test_validation_sine_driver_passes():
    rep = validate_assumptions(make_spec(f=lambda t, x, y, z: np.sin(y)))
    assert rep.lipschitz_ratios["driver"] <= 1.0 + 1e-9
    assert "driver" not in rep.flagged


@settings(max_examples=25, deadline=None)
@given(a=st.floats(0.1, 5.0), K=st.floats(0.5, 5.0), bump=st.floats(0.0, 3.0))
def test_validation_monotone_in_K(a, K, bump):
    def build(k):
        return make_spec(b=lambda t, x: a * x, sigma=lambda t, x: np.full_like(x, 0.5), K=k)

    if validate_assumptions(build(K)).passed:
        assert validate_assumptions(build(K + bump)).passed


def test_path_functional_reduces_to_pointwise():
    n = 4
    pointwise = make_spec(h=lambda x: 0.7 * x[:, 0])
    spec = make_spec()
    spec_path = type(spec)(spec.coefficients, TerminalCondition(h_path=lambda p: 0.7 * p[:, -1, 0], n_steps=n),
                           1, 1, 1.0)
    a = validate_assumptions(pointwise).lipschitz_ratios["terminal"]
    b = validate_assumptions(spec_path).lipschitz_ratios["terminal_gradient_sum"]
    assert a == pytest.approx(0.7, rel=1e-6)
    assert b == pytest.approx(0.7, rel=1e-5)


@pytest.mark.parametrize("name", ["constant", "martingale", "linear-g0", "quad", "linear-gy", "geometric"])
def test_presets_respect_declared_constant_except_quadratic_terminal(name):
    rep = validate_assumptions(PRESETS[name].spec())
    flagged = set(rep.flagged) - {"terminal"}
    assert not flagged, rep


def test_quadratic_terminal_is_flagged():
    assert "terminal" in validate_assumptions(PRESETS["heat-quad"].spec()).flagged
