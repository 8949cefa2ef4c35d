"""Euler scheme for the forward diffusion and its strong-error study."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .io import write_csv
from .errors import InvalidArgumentError, NumericOverflowError
from .noise import NoiseGrid, brownian_bridge_refine, coarsen, sample_noise
from .parallel import run_chunks
from .problem import CoefficientSet, Partition, ProblemSpec, make_uniform_partition
from .stats import SlopeFit, fit_slope


def _advance(coeffs: CoefficientSet, t: float, dt: float, x: np.ndarray, dw: np.ndarray) -> np.ndarray:
    sig = coeffs.sigma(t, x)
    out = x + coeffs.b(t, x) * dt
    # explicit sum over the noise index keeps the result independent of BLAS
    for j in range(x.shape[1]):
        out = out + sig[:, :, j] * dw[:, j : j + 1]
    return out


def euler_step(x, t_prev: float, dt: float, dW, coeffs: CoefficientSet, *, step: int | None = None,
               path_offset: int = 0) -> np.ndarray:
    """One Euler step ``x + b(t, x) dt + sigma(t, x) dW``.

    Accepts a single state of shape (d,) or a batch (M, d).

    Raises:
        InvalidArgumentError: if ``dt <= 0``.
        NumericOverflowError: if a result is not finite; carries the path
            index (plus ``path_offset``) and ``step``.
    """
    if not dt > 0:
        raise InvalidArgumentError(f"step size must be positive, got {dt!r}")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xb = np.atleast_2d(x)
    dwb = np.asarray(dW, dtype=float).reshape(xb.shape[0], -1)
    with np.errstate(over="ignore", invalid="ignore"):
        out = _advance(coeffs, t_prev, dt, xb, dwb)
    bad = ~np.all(np.isfinite(out), axis=1)
    if np.any(bad):
        p = int(np.argmax(bad))
        raise NumericOverflowError("forward state is not finite", path=path_offset + p, step=step)
    return out[0] if single else out


@dataclass(frozen=True, eq=False)
class ForwardEnsemble:
    """Euler paths ``values`` (M, n + 1, d) with the noise that drove them."""

    values: np.ndarray
    partition: Partition
    noise: NoiseGrid

    @property
    def M(self) -> int:
        return self.values.shape[0]

    def recursion_residual(self, coeffs: CoefficientSet) -> float:
        """Largest deviation from the one-step recursion, recomputed."""
        worst = 0.0
        times, steps = self.partition.times, self.partition.steps
        for i in range(self.partition.n):
            x = self.values[:, i]
            nxt = _advance(coeffs, times[i], steps[i], x, self.noise.dW[:, i])
            worst = max(worst, float(np.max(np.abs(nxt - self.values[:, i + 1]))))
        return worst

    def step_index(self, t: float) -> int:
        return step_index(self.partition, t)

    def step_process(self, path: int, t: float) -> np.ndarray:
        return self.values[path, self.step_index(t)]

    def to_csv(self, path) -> None:
        write_paths_csv(path, self.partition, self.values, "x")


def step_index(partition: Partition, t: float) -> int:
    """Index of ``pi(t)``: the left grid point, with ``pi(T) = T``."""
    T = partition.T
    if not (0.0 <= t <= T):
        raise InvalidArgumentError(f"time {t!r} outside [0, {T}]")
    if t == T:
        return partition.n
    return int(np.searchsorted(partition.times, t, side="right") - 1)


def step_process_eval(ensemble: ForwardEnsemble, path: int, t: float) -> np.ndarray:
    """Value of the step process ``X^pi_{pi(t)}`` on one path."""
    return ensemble.step_process(path, t)


def simulate_forward(spec: ProblemSpec, partition: Partition, noise: NoiseGrid,
                     threads: int | None = None, path_offset: int = 0) -> ForwardEnsemble:
    """Advance every path of ``noise`` through all Euler steps."""
    if noise.partition.n != partition.n or not np.allclose(noise.partition.times, partition.times):
        raise InvalidArgumentError("noise was drawn on a different partition")
    if noise.d != spec.d:
        raise InvalidArgumentError(f"noise has d={noise.d}, problem has d={spec.d}")
    M, n, d = noise.M, partition.n, spec.d
    values = np.empty((M, n + 1, d))
    values[:, 0] = spec.x0
    times, steps = partition.times, partition.steps
    coeffs = spec.coefficients
    failures = []

    def work(s):
        x = values[s, 0]
        for i in range(n):
            try:
                x = euler_step(x, times[i], steps[i], noise.dW[s, i], coeffs, step=i + 1,
                               path_offset=path_offset + s.start)
            except NumericOverflowError as exc:
                failures.append(exc)
                return
            values[s, i + 1] = x

    run_chunks(work, M, threads)
    if failures:
        # report the earliest step, then the lowest path, whatever the scheduling
        raise min(failures, key=lambda e: (e.step, e.path))
    return ForwardEnsemble(values, partition, noise)


def write_paths_csv(path, partition: Partition, values: np.ndarray, name: str) -> None:
    """CSV with columns ``path_id, step, t, <name>_0 ...``."""
    M, n1, d = values.shape
    rows = ([p, i, partition.times[i], *values[p, i]] for p in range(M) for i in range(n1))
    write_csv(path, ["path_id", "step", "t"] + [f"{name}_{k}" for k in range(d)], rows)


@dataclass
class StrongErrorReport:
    levels: list
    mesh: np.ndarray
    sup_error: np.ndarray
    sup_error_se: np.ndarray
    increment_stat: np.ndarray
    fit: SlopeFit | None


def _euler_interpolant_error(spec, fine_part, coarse_part, X_ref, X_c, W_ref):
    """Squared sup over fine times of the gap between the reference path and
    the continuous Euler interpolant of the coarse chain."""
    idx = fine_part.coarse_index_map(coarse_part)
    coeffs = spec.coefficients
    M = X_ref.shape[0]
    worst = np.zeros(M)
    for i in range(coarse_part.n):
        x = X_c[:, i]
        t0 = coarse_part.times[i]
        b = coeffs.b(t0, x)
        sig = coeffs.sigma(t0, x)
        for j in range(idx[i], idx[i + 1] + 1):
            dt = fine_part.times[j] - t0
            dw = W_ref[:, j] - W_ref[:, idx[i]]
            interp = x + b * dt
            for k in range(x.shape[1]):
                interp = interp + sig[:, :, k] * dw[:, k : k + 1]
            gap = np.sum((interp - X_ref[:, j]) ** 2, axis=1)
            np.maximum(worst, gap, out=worst)
    return worst


def forward_strong_error(spec: ProblemSpec, levels, M: int, seed: int, threads: int | None = None,
                         batch: int = 20000) -> StrongErrorReport:
    """Estimate ``E[sup_t |X_t - X^pi_t|^2]`` per level.

    The reference is the Euler chain at four times the finest level, on
    noise bridged down from the finest level; coarse levels use the summed
    increments.  The coarse path between grid times is the continuous Euler
    interpolant driven by the reference Brownian path.
    """
    levels = sorted(int(v) for v in levels)
    if len(levels) < 2:
        raise InvalidArgumentError("need at least two levels")
    T = spec.T
    finest = make_uniform_partition(T, levels[-1])
    ref = make_uniform_partition(T, 4 * levels[-1])
    parts = [make_uniform_partition(T, n) for n in levels]
    for p in parts:
        if not finest.refines(p):
            raise InvalidArgumentError("levels must be nested")
    sums = np.zeros(len(levels))
    sq = np.zeros(len(levels))
    inc = np.zeros((len(levels),))
    inc_max = [np.zeros(p.n) for p in parts]
    for lo in range(0, M, batch):
        m = min(batch, M - lo)
        base = sample_noise(finest, spec.d, spec.ell, m, seed, path_offset=lo, threads=threads)
        fine_noise = brownian_bridge_refine(base, ref, path_offset=lo, threads=threads)
        X_ref = simulate_forward(spec, ref, fine_noise, threads, path_offset=lo).values
        W_ref = fine_noise.W_levels()
        for k, p in enumerate(parts):
            X_c = simulate_forward(spec, p, coarsen(fine_noise, p), threads, path_offset=lo).values
            e = _euler_interpolant_error(spec, ref, p, X_ref, X_c, W_ref)
            sums[k] += e.sum()
            sq[k] += (e**2).sum()
            idx = ref.coarse_index_map(p)
            for i in range(p.n):
                seg = X_ref[:, idx[i] : idx[i + 1] + 1] - X_ref[:, idx[i] : idx[i] + 1]
                inc_max[k][i] += np.sum(np.max(np.sum(seg**2, axis=2), axis=1))
    mean = sums / M
    se = np.sqrt(np.maximum(sq / M - mean**2, 0.0) / max(M - 1, 1))
    for k in range(len(levels)):
        inc[k] = np.max(inc_max[k]) / M
    mesh = np.array([p.mesh for p in parts])
    fit = fit_slope(mesh, mean) if np.all(mean > 0) else None
    return StrongErrorReport(levels, mesh, mean, se, inc, fit)
