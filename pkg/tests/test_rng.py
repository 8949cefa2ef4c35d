import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bdsde import _pykernels, rng
from bdsde.parallel import chunks, run_chunks

try:
    from bdsde import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def test_derive_key_distinguishes_labels():
    keys = {rng.derive_key(0, lab) for lab in range(1, 9)}
    assert len(keys) == 8
    assert rng.derive_key(1, 2, 3) != rng.derive_key(1, 3, 2)


@settings(max_examples=30, deadline=None)
@given(rows=st.integers(1, 40), cols=st.integers(1, 9), off=st.integers(0, 10_000))
def test_row_offset_gives_the_same_rows(rows, cols, off):
    key = rng.derive_key(5, rng.W_STREAM)
    whole = rng.normals(key, off + rows, cols, kernels=_pykernels)
    part = rng.normals(key, rows, cols, row_offset=off, kernels=_pykernels)
    assert np.array_equal(whole[off:], part)


def test_normal_moments():
    z = rng.normals(rng.derive_key(3, rng.W_STREAM), 200_000, 1)[:, 0]
    assert abs(z.mean()) < 5 / np.sqrt(z.size)
    assert abs(z.var() - 1) < 5 * np.sqrt(2 / z.size)


def test_uniforms_in_unit_interval():
    u = rng.uniforms(rng.derive_key(3, rng.BOOTSTRAP), 1000, 10)
    assert u.min() >= 0 and u.max() < 1
    assert abs(u.mean() - 0.5) < 5 * np.sqrt(1 / 12 / u.size)


@pytest.mark.skipif(_ckernels is None, reason="compiled extension not built")
def test_backends_agree():
    key = rng.derive_key(11, rng.B_STREAM)
    a = rng.normals(key, 5000, 7, kernels=_pykernels)
    b = rng.normals(key, 5000, 7, kernels=_ckernels)
    assert np.max(np.abs(a - b)) < 1e-14
    ua = rng.uniforms(key, 500, 3, kernels=_pykernels)
    ub = rng.uniforms(key, 500, 3, kernels=_ckernels)
    assert np.array_equal(ua, ub)


@pytest.mark.parametrize("threads", [1, 2, 8])
def test_thread_count_does_not_change_draws(threads):
    key = rng.derive_key(9, rng.W_STREAM)
    ref = rng.normals(key, 10_000, 3, threads=1)
    assert np.array_equal(ref, rng.normals(key, 10_000, 3, threads=threads))


def test_chunks_cover_range():
    parts = chunks(10_000, 4096)
    assert [(s.start, s.stop) for s in parts] == [(0, 4096), (4096, 8192), (8192, 10_000)]
    seen = []
    run_chunks(lambda s: seen.append(s.start), 10_000, threads=3, size=4096)
    assert sorted(seen) == [0, 4096, 8192]
