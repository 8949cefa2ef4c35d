"""Counter-based Gaussian and uniform streams.

The compiled kernel is used when it was built; set ``BDSDE_PURE_PYTHON=1``
to force the numpy fallback.  Both produce the same SplitMix64 streams; the
Gaussian transform may differ in the last ulp between libm and numpy.
"""

from __future__ import annotations

import os

import numpy as np

from . import _pykernels
from .parallel import run_chunks

if os.environ.get("BDSDE_PURE_PYTHON", "") == "1":
    _kernels = _pykernels
else:
    try:
        from . import _ckernels as _kernels
    except ImportError:  # extension not built
        _kernels = _pykernels

BACKEND = "cython" if _kernels is not _pykernels else "numpy"

MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15

# stream labels
W_STREAM = 1
B_STREAM = 2
BRIDGE_W = 3
BRIDGE_B = 4
NESTED = 5
BOOTSTRAP = 6
PROBE = 7
REALIZATION = 8


def _mix(z: int) -> int:
    z &= MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


def derive_key(seed: int, *labels: int) -> int:
    """Hash a master seed and integer labels into a 64-bit stream key."""
    k = _mix(int(seed) + _GAMMA)
    for lab in labels:
        k = _mix(k ^ _mix(int(lab) * _GAMMA + 0x632BE59BD9B4E019))
    return k


def normals(key: int, rows: int, cols: int, row_offset: int = 0, threads: int | None = None,
            kernels=None) -> np.ndarray:
    """Standard normal block; row ``r`` is stream ``row_offset + r`` of ``key``."""
    k = kernels or _kernels
    out = np.empty((rows, cols))

    def work(s):
        out[s] = k.normal_block(key, s.stop - s.start, cols, row_offset + s.start)

    run_chunks(work, rows, threads)
    return out


def uniforms(key: int, rows: int, cols: int, row_offset: int = 0, threads: int | None = None,
             kernels=None) -> np.ndarray:
    k = kernels or _kernels
    out = np.empty((rows, cols))

    def work(s):
        out[s] = k.uniform_block(key, s.stop - s.start, cols, row_offset + s.start)

    run_chunks(work, rows, threads)
    return out
