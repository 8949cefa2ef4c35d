import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bdsde.errors import InvalidArgumentError
from bdsde.noise import (
    NoiseGrid,
    brownian_bridge_refine,
    coarsen,
    dump_noise,
    load_noise,
    sample_noise,
)
from bdsde.problem import make_uniform_partition

ULP_SUM = 4 * np.finfo(float).eps  # summation of bridge pieces is exact up to rounding


def test_same_seed_gives_identical_grid():
    p = make_uniform_partition(1.0, 8)
    a = sample_noise(p, 1, 1, 100, 42)
    b = sample_noise(p, 1, 1, 100, 42)
    assert np.array_equal(a.dW, b.dW) and np.array_equal(a.dB, b.dB)


def test_forward_increment_mean():
    p = make_uniform_partition(1.0, 4)
    M = 100_000
    g = sample_noise(p, 1, 1, M, 1)
    mean = g.dW[:, :, 0].mean(axis=0)
    assert np.all(np.abs(mean) < 5 * np.sqrt(p.steps / M))


def test_single_step_variance():
    p = make_uniform_partition(2.0, 1)
    M = 20_000
    x = sample_noise(p, 1, 1, M, 2).dW[:, 0, 0]
    se = np.sqrt(2 / M) * 2.0
    assert abs(x.var(ddof=1) - 2.0) < 5 * se


def test_per_step_variance():
    p = make_uniform_partition(1.0, 5)
    M = 10_000
    dw = sample_noise(p, 2, 1, M, 3).dW
    var = dw.var(axis=0, ddof=1)
    se = np.sqrt(2 / M) * p.steps[:, None]
    assert np.all(np.abs(var - p.steps[:, None]) < 5 * se)


def test_w_and_b_are_uncorrelated():
    p = make_uniform_partition(1.0, 3)
    M = 20_000
    g = sample_noise(p, 1, 1, M, 4, mode="per-path-b")
    for i in range(3):
        for j in range(3):
            rho = np.corrcoef(g.dW[:, i, 0], g.dB[:, j, 0])[0, 1]
            assert abs(rho) < 5 / np.sqrt(M)


def test_refine_halves_sum_to_coarse():
    coarse = make_uniform_partition(1.0, 1)
    g = sample_noise(coarse, 1, 1, 50, 5)
    f = brownian_bridge_refine(g, make_uniform_partition(1.0, 2))
    assert np.allclose(f.dW[:, 0] + f.dW[:, 1], g.dW[:, 0], rtol=0, atol=ULP_SUM * 10)
    assert np.allclose(f.dB[0] + f.dB[1], g.dB[0], rtol=0, atol=ULP_SUM * 10)


def test_refine_to_same_partition_is_identity():
    p = make_uniform_partition(1.0, 4)
    g = sample_noise(p, 1, 1, 10, 6)
    f = brownian_bridge_refine(g, p)
    assert np.array_equal(f.dW, g.dW) and np.array_equal(f.dB, g.dB)


def test_bridge_variance_of_first_half():
    coarse = make_uniform_partition(1.0, 1)
    M = 40_000
    g = sample_noise(coarse, 1, 1, M, 7)
    f = brownian_bridge_refine(g, make_uniform_partition(1.0, 2))
    # unconditionally the half-step increment is N(0, 1/2)
    v = f.dW[:, 0, 0].var(ddof=1)
    assert abs(v - 0.5) < 5 * 0.5 * np.sqrt(2 / M)
    # conditionally on the coarse increment the residual variance is 1/4
    resid = f.dW[:, 0, 0] - 0.5 * g.dW[:, 0, 0]
    assert abs(resid.var(ddof=1) - 0.25) < 5 * 0.25 * np.sqrt(2 / M)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 6), r=st.integers(1, 5), seed=st.integers(0, 2**32))
def test_telescoping_and_coarsen_roundtrip(n, r, seed):
    coarse = make_uniform_partition(1.0, n)
    g = sample_noise(coarse, 1, 1, 7, seed)
    f = brownian_bridge_refine(g, make_uniform_partition(1.0, n * r))
    assert np.allclose(f.dW.sum(axis=1), g.dW.sum(axis=1), rtol=0, atol=1e-13)
    back = coarsen(f, coarse)
    assert np.allclose(back.dW, g.dW, rtol=0, atol=1e-14)
    assert np.allclose(back.dB, g.dB, rtol=0, atol=1e-14)


def test_bridge_batches_match_whole():
    coarse = make_uniform_partition(1.0, 2)
    fine = make_uniform_partition(1.0, 8)
    g = sample_noise(coarse, 1, 1, 10, 8)
    whole = brownian_bridge_refine(g, fine)
    tail = brownian_bridge_refine(g.subset(slice(4, 10)), fine, path_offset=4)
    assert np.array_equal(whole.dW[4:], tail.dW)


def test_sample_in_batches_matches_whole():
    p = make_uniform_partition(1.0, 4)
    whole = sample_noise(p, 1, 1, 10, 9)
    tail = sample_noise(p, 1, 1, 6, 9, path_offset=4)
    assert np.array_equal(whole.dW[4:], tail.dW)


def test_dump_and_load_roundtrip(tmp_path):
    p = make_uniform_partition(1.0, 3)
    for mode in ("frozen-b", "per-path-b"):
        g = sample_noise(p, 2, 1, 5, 10, mode=mode)
        path = tmp_path / f"{mode}.bdsn"
        dump_noise(g, path)
        h = load_noise(path, p)
        assert np.array_equal(g.dW, h.dW) and np.array_equal(g.dB, h.dB)
        assert h.mode == g.mode and h.seed == g.seed


def test_invalid_arguments():
    p = make_uniform_partition(1.0, 2)
    with pytest.raises(InvalidArgumentError):
        sample_noise(p, 1, 1, 0, 1)
    with pytest.raises(InvalidArgumentError):
        sample_noise(p, 1, 1, 5, 1, mode="sideways")
    with pytest.raises(InvalidArgumentError):
        brownian_bridge_refine(sample_noise(p, 1, 1, 2, 1), make_uniform_partition(1.0, 3))
    with pytest.raises(InvalidArgumentError):
        NoiseGrid(np.zeros((2, 2, 1)), np.zeros((2, 1)), 0, "bogus", p)
