"""Pure-numpy counter-based random kernels (fallback for ``_ckernels``).

Row ``r`` of a block owns a SplitMix64 stream whose state is
``mix64(key + GAMMA * (row_offset + r + 1))``; the variate in column ``c``
is a function of that state and ``c`` alone, so any sub-block can be
regenerated independently of the others.
"""

from __future__ import annotations

import numpy as np

GAMMA = np.uint64(0x9E3779B97F4A7C15)
M1 = np.uint64(0xBF58476D1CE4E5B9)
M2 = np.uint64(0x94D049BB133111EB)
TWO_PI = 6.283185307179586
INV_2_53 = 1.0 / 9007199254740992.0

_ROW_CHUNK = 2048


def mix64(z: np.ndarray) -> np.ndarray:
    z = z.copy()
    z ^= z >> np.uint64(30)
    z *= M1
    z ^= z >> np.uint64(27)
    z *= M2
    z ^= z >> np.uint64(31)
    return z


def _row_states(key: int, row_offset: int, rows: int) -> np.ndarray:
    r = np.arange(row_offset + 1, row_offset + rows + 1, dtype=np.uint64)
    return mix64(np.uint64(key) + GAMMA * r)


def normal_block(key: int, rows: int, cols: int, row_offset: int = 0) -> np.ndarray:
    out = np.empty((rows, cols), dtype=np.float64)
    if rows == 0 or cols == 0:
        return out
    c = np.arange(cols, dtype=np.uint64)
    pair = c >> np.uint64(1)
    use_sin = (c & np.uint64(1)).astype(bool)
    with np.errstate(over="ignore"):
        for lo in range(0, rows, _ROW_CHUNK):
            hi = min(rows, lo + _ROW_CHUNK)
            s = _row_states(key, row_offset + lo, hi - lo)[:, None]
            z1 = mix64(s + GAMMA * (np.uint64(2) * pair + np.uint64(1)))
            z2 = mix64(s + GAMMA * (np.uint64(2) * pair + np.uint64(2)))
            u1 = ((z1 >> np.uint64(11)) + np.uint64(1)).astype(np.float64) * INV_2_53
            u2 = (z2 >> np.uint64(11)).astype(np.float64) * INV_2_53
            rad = np.sqrt(-2.0 * np.log(u1))
            theta = TWO_PI * u2
            out[lo:hi] = rad * np.where(use_sin, np.sin(theta), np.cos(theta))
    return out


def uniform_block(key: int, rows: int, cols: int, row_offset: int = 0) -> np.ndarray:
    out = np.empty((rows, cols), dtype=np.float64)
    if rows == 0 or cols == 0:
        return out
    c = np.arange(cols, dtype=np.uint64)
    with np.errstate(over="ignore"):
        for lo in range(0, rows, _ROW_CHUNK):
            hi = min(rows, lo + _ROW_CHUNK)
            s = _row_states(key, row_offset + lo, hi - lo)[:, None]
            z = mix64(s + GAMMA * (c + np.uint64(1)))
            out[lo:hi] = (z >> np.uint64(11)).astype(np.float64) * INV_2_53
    return out
