"""Brownian increments for the forward noise W and the backward noise B.

Every path owns a counter-addressed row of the W stream, so a path's
increments never depend on how many paths are drawn alongside it or on the
thread count.  In frozen-B mode one B sequence is shared by all paths.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import InvalidArgumentError
from .problem import Partition

FROZEN = "frozen"
PER_PATH = "per-path"
_MODES = (FROZEN, PER_PATH)

MAGIC = b"BDSN"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIQIQ")


@dataclass(frozen=True, eq=False)
class NoiseGrid:
    """Forward increments ``dW`` (M, n, d) and backward increments ``dB``.

    ``dB`` has shape (n, ell) in frozen mode and (M, n, ell) per path.
    """

    dW: np.ndarray
    dB: np.ndarray
    seed: int
    mode: str
    partition: Partition

    def __post_init__(self):
        if self.mode not in _MODES:
            raise InvalidArgumentError(f"unknown noise mode {self.mode!r}")
        m, n, _ = self.dW.shape
        if n != self.partition.n:
            raise InvalidArgumentError("dW does not match the partition")
        want = (n,) if self.mode == FROZEN else (m, n)
        if self.dB.shape[:-1] != want:
            raise InvalidArgumentError(f"dB shape {self.dB.shape} does not fit mode {self.mode}")

    @property
    def M(self) -> int:
        return self.dW.shape[0]

    @property
    def d(self) -> int:
        return self.dW.shape[2]

    @property
    def ell(self) -> int:
        return self.dB.shape[-1]

    @property
    def frozen(self) -> bool:
        return self.mode == FROZEN

    def dB_paths(self) -> np.ndarray:
        """``dB`` broadcast to (M, n, ell)."""
        if self.frozen:
            return np.broadcast_to(self.dB, (self.M,) + self.dB.shape)
        return self.dB

    def B_levels(self) -> np.ndarray:
        """Running sums ``B_{t_i}``, shape (n + 1, ell) or (M, n + 1, ell)."""
        axis = 0 if self.frozen else 1
        csum = np.cumsum(self.dB, axis=axis)
        pad = [(0, 0)] * self.dB.ndim
        pad[axis] = (1, 0)
        return np.pad(csum, pad)

    def W_levels(self) -> np.ndarray:
        return np.pad(np.cumsum(self.dW, axis=1), ((0, 0), (1, 0), (0, 0)))

    def subset(self, rows) -> "NoiseGrid":
        dB = self.dB if self.frozen else self.dB[rows]
        return NoiseGrid(self.dW[rows], dB, self.seed, self.mode, self.partition)


def _check_mode(mode: str) -> str:
    mode = {"frozen-b": FROZEN, "per-path-b": PER_PATH}.get(mode, mode)
    if mode not in _MODES:
        raise InvalidArgumentError(f"unknown noise mode {mode!r}")
    return mode


def sample_noise(
    partition: Partition,
    d: int,
    ell: int,
    M: int,
    seed: int,
    mode: str = FROZEN,
    b_seed: int | None = None,
    path_offset: int = 0,
    threads: int | None = None,
) -> NoiseGrid:
    """Draw ``M`` paths of forward noise and the backward noise.

    Args:
        partition: time grid.
        d, ell: dimensions of W and B.
        M: number of paths.
        seed: master seed; W and B use separate labelled substreams.
        mode: ``"frozen"`` (one B sequence) or ``"per-path"``.
        b_seed: seed for B if it should differ from ``seed``.
        path_offset: index of the first path, so that disjoint batches of
            one large ensemble can be generated separately.
        threads: worker count, ``None`` reads ``BDSDE_THREADS``.
    """
    mode = _check_mode(mode)
    if int(M) != M or M < 1:
        raise InvalidArgumentError(f"path count must be >= 1, got {M!r}")
    if d < 1 or ell < 1:
        raise InvalidArgumentError("dimensions must be positive")
    steps = partition.steps
    kw = rng.derive_key(seed, rng.W_STREAM)
    zw = rng.normals(kw, M, partition.n * d, row_offset=path_offset, threads=threads)
    dW = zw.reshape(M, partition.n, d) * np.sqrt(steps)[None, :, None]
    kb = rng.derive_key(seed if b_seed is None else b_seed, rng.B_STREAM)
    if mode == FROZEN:
        dB = rng.normals(kb, 1, partition.n * ell).reshape(partition.n, ell) * np.sqrt(steps)[:, None]
    else:
        zb = rng.normals(kb, M, partition.n * ell, row_offset=path_offset, threads=threads)
        dB = zb.reshape(M, partition.n, ell) * np.sqrt(steps)[None, :, None]
    return NoiseGrid(dW, dB, int(seed), mode, partition)


def _bridge(coarse: np.ndarray, coarse_part: Partition, fine: Partition, z: np.ndarray) -> np.ndarray:
    """Fill fine increments given coarse ones and standard normals.

    ``coarse`` is (rows, n_coarse, w), ``z`` is (rows, n_fine, w).  Within a
    coarse interval the fine increments are drawn one after another from
    the Brownian-bridge law; the last one takes whatever remains, so the
    pieces add up to the coarse increment.
    """
    idx = fine.coarse_index_map(coarse_part)
    h = fine.steps
    out = np.empty(z.shape)
    for i in range(coarse_part.n):
        lo, hi = idx[i], idx[i + 1]
        remaining = coarse[:, i, :].copy()
        tau = fine.times[hi] - fine.times[lo]
        for j in range(lo, hi - 1):
            mean = remaining * (h[j] / tau)
            var = h[j] * (tau - h[j]) / tau
            out[:, j, :] = mean + np.sqrt(var) * z[:, j, :]
            remaining -= out[:, j, :]
            tau = fine.times[hi] - fine.times[j + 1]
        out[:, hi - 1, :] = remaining
    return out


def brownian_bridge_refine(grid: NoiseGrid, target: Partition, seed: int | None = None,
                           path_offset: int = 0, threads: int | None = None) -> NoiseGrid:
    """Refine ``grid`` onto ``target`` by Brownian-bridge interpolation.

    ``path_offset`` is the global index of the grid's first path, as in
    :func:`sample_noise`, so batches refine exactly like the whole.
    """
    src = grid.partition
    if not target.refines(src):
        raise InvalidArgumentError("target partition does not refine the source partition")
    if target.n == src.n:
        return NoiseGrid(grid.dW.copy(), grid.dB.copy(), grid.seed, grid.mode, target)
    seed = grid.seed if seed is None else seed
    n = target.n
    kw = rng.derive_key(seed, rng.BRIDGE_W, n)
    zw = rng.normals(kw, grid.M, n * grid.d, row_offset=path_offset, threads=threads).reshape(grid.M, n, grid.d)
    dW = _bridge(grid.dW, src, target, zw)
    kb = rng.derive_key(seed, rng.BRIDGE_B, n)
    if grid.frozen:
        zb = rng.normals(kb, 1, n * grid.ell).reshape(1, n, grid.ell)
        dB = _bridge(grid.dB[None], src, target, zb)[0]
    else:
        zb = rng.normals(kb, grid.M, n * grid.ell, row_offset=path_offset, threads=threads).reshape(grid.M, n, grid.ell)
        dB = _bridge(grid.dB, src, target, zb)
    return NoiseGrid(dW, dB, grid.seed, grid.mode, target)


def coarsen(grid: NoiseGrid, coarse: Partition) -> NoiseGrid:
    """Sum fine increments over the intervals of a coarser partition."""
    fine = grid.partition
    idx = fine.coarse_index_map(coarse)[:-1]
    dW = np.add.reduceat(grid.dW, idx, axis=1)
    dB = np.add.reduceat(grid.dB, idx, axis=0 if grid.frozen else 1)
    return NoiseGrid(dW, dB, grid.seed, grid.mode, coarse)


def dump_noise(grid: NoiseGrid, path) -> None:
    """Write the little-endian binary format (header, then dW, then dB)."""
    header = _HEADER.pack(
        MAGIC, VERSION, grid.d, grid.ell, grid.partition.n, grid.M,
        0 if grid.frozen else 1, int(grid.seed) & rng.MASK,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(grid.dW, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(grid.dB, dtype="<f8").tobytes())


def load_noise(path, partition: Partition) -> NoiseGrid:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise InvalidArgumentError("noise file is truncated")
    magic, version, d, ell, n, M, mode, seed = _HEADER.unpack_from(raw)
    if magic != MAGIC or version != VERSION:
        raise InvalidArgumentError("not a noise file of a supported version")
    if n != partition.n:
        raise InvalidArgumentError(f"noise file has {n} steps, partition has {partition.n}")
    frozen = mode == 0
    nw = M * n * d
    nb = n * ell if frozen else M * n * ell
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if body.size != nw + nb:
        raise InvalidArgumentError("noise file size does not match its header")
    dW = body[:nw].reshape(M, n, d).astype(float)
    dB = body[nw:].reshape((n, ell) if frozen else (M, n, ell)).astype(float)
    return NoiseGrid(dW, dB, seed, FROZEN if frozen else PER_PATH, partition)
