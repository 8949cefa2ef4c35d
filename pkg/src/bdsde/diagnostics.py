"""L2-regularity of Z and the path modulus of Y, as Monte Carlo statistics.

The reference Z lives on a fine grid: either a closed form evaluated there
or the quadrature table ``v_j`` of the scheme on that grid.  The
conditional time average of Z over a coarse interval is computed with the
Gauss-Hermite operator, one fine step at a time, so it inherits no
regression error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .backward import backward_sweep
from .condexp import (
    CondExpProvider,
    CondExpRequest,
    GaussHermiteOperator,
    GridFunction,
    QuadratureProvider,
    default_domain,
)
from .errors import InvalidArgumentError
from .forward import simulate_forward
from .io import write_csv
from .noise import sample_noise
from .presets import Preset
from .problem import Partition, ProblemSpec, make_uniform_partition
from .stats import SlopeFit, fit_slope


def trapezoid_weights(fine: Partition, lo: int, hi: int) -> np.ndarray:
    h = fine.steps[lo:hi]
    w = np.zeros(hi - lo + 1)
    w[:-1] += h / 2
    w[1:] += h / 2
    return w


def ztilde(z_samples, coarse: Partition, fine: Partition, provider: CondExpProvider, states) -> np.ndarray:
    """Conditional time average of sampled Z over every coarse interval.

    Args:
        z_samples: (M, N + 1) values of one Z component on the fine grid.
        coarse, fine: nested partitions.
        provider: conditional-expectation estimator (for instance
            regression) applied to the trapezoidal averages.
        states: (M, n + 1, d) forward states at the coarse times.

    Returns:
        (M, n) array of ``Ztilde_{t_{i-1}}`` per path.
    """
    if not fine.refines(coarse):
        raise InvalidArgumentError("the fine partition must refine the coarse one")
    z = np.asarray(z_samples, float)
    idx = fine.coarse_index_map(coarse)
    M = z.shape[0]
    out = np.empty((M, coarse.n))
    for i in range(coarse.n):
        w = trapezoid_weights(fine, idx[i], idx[i + 1])
        avg = z[:, idx[i] : idx[i + 1] + 1] @ w / coarse.steps[i]
        x = np.asarray(states, float)[:, i]
        req = CondExpRequest(step=i + 1, t_prev=coarse.times[i], dt=coarse.steps[i], ytilde=avg,
                             dW=np.zeros_like(x), states=x)
        out[:, i] = provider.estimate(req)
    return out


class ZReference:
    """Fine-grid Z as functions of the state, plus their conditional averages."""

    def __init__(self, spec: ProblemSpec, fine: Partition, grid: np.ndarray, tables: np.ndarray,
                 order: int = 21):
        self.spec, self.fine, self.grid = spec, fine, grid
        self.tables = tables  # (N + 1, G)
        self.op = GaussHermiteOperator(spec, order)

    @classmethod
    def from_closed_form(cls, spec, fine, z_continuous, domain=None):
        domain = domain or default_domain(spec)
        g = domain.grid
        tab = np.stack([z_continuous(t, g) for t in fine.times])
        return cls(spec, fine, g, tab)

    @classmethod
    def from_quadrature(cls, spec, fine, dB, seed=0):
        """``v_j`` from a quadrature sweep on ``fine``; the terminal row,
        which the scheme sets to zero, is replaced by the last step's table."""
        provider = QuadratureProvider(spec)
        noise = sample_noise(fine, spec.d, spec.ell, 1, seed)
        noise = type(noise)(noise.dW, np.asarray(dB, float).reshape(fine.n, -1), noise.seed, noise.mode, fine)
        fw = simulate_forward(spec, fine, noise)
        sol = backward_sweep(spec, fine, fw, noise, provider)
        v = sol.aux_Z[..., 0].copy()
        v[-1] = v[-2]
        return cls(spec, fine, sol.aux_grid[:, 0], v)

    def at(self, j: int, x: np.ndarray) -> np.ndarray:
        return GridFunction(self.grid, self.tables[j])(x)

    def averaged_table(self, lo: int, hi: int) -> np.ndarray:
        """Grid table of ``E[int_{s_lo}^{s_hi} Z ds | X_{s_lo} = x] / (s_hi - s_lo)``."""
        w = trapezoid_weights(self.fine, lo, hi)
        acc = w[-1] * self.tables[hi]
        for j in range(hi - 1, lo - 1, -1):
            nxt = GridFunction(self.grid, acc)
            e0, _ = self.op.expect(self.fine.times[j], self.fine.steps[j], self.grid, nxt)
            acc = w[j - lo] * self.tables[j] + e0
        return acc / (self.fine.times[hi] - self.fine.times[lo])


@dataclass
class RegularityReport:
    levels: list
    mesh: np.ndarray
    z_stat: np.ndarray
    z_se: np.ndarray
    y_stat: np.ndarray
    y_se: np.ndarray
    z_fit: SlopeFit | None
    y_fit: SlopeFit | None
    fine_mesh: float  # bias scale of the fine-grid stand-in

    def to_csv(self, path) -> None:
        rows = [[k, n, self.mesh[k], self.z_stat[k], self.z_se[k], self.y_stat[k], self.y_se[k]]
                for k, n in enumerate(self.levels)]
        for name, fit in (("slope_z", self.z_fit), ("slope_y", self.y_fit)):
            rows.append([name, "", "", "" if fit is None else fit.slope,
                         "" if fit is None else fit.half_width, "", ""])
        rows.append(["fine_mesh", "", self.fine_mesh, "", "", "", ""])
        write_csv(path, ["level", "n", "mesh", "z_stat", "z_stat_se", "y_stat", "y_stat_se"], rows)


def _check_levels(levels):
    levels = [int(v) for v in levels]
    if len(levels) < 2:
        raise InvalidArgumentError("need at least two levels")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise InvalidArgumentError("levels must be strictly increasing")
    return levels


def _fine_setup(preset: Preset, levels, M, seed, T, ratio=4):
    spec = preset.spec(T)
    fine = make_uniform_partition(T, ratio * max(levels))
    for n in levels:
        if not fine.refines(make_uniform_partition(T, n)):
            raise InvalidArgumentError("levels must divide the fine grid")
    noise = sample_noise(fine, spec.d, spec.ell, M, seed)
    fw = simulate_forward(spec, fine, noise)
    return spec, fine, noise, fw


def z_regularity(ref: ZReference, X: np.ndarray, coarse: Partition, candidate: str = "ztilde"):
    """Per-path ``sum_i int |Z_s - Ztilde_{t_{i-1}}|^2 ds`` on the fine grid.

    ``candidate="left"`` replaces the conditional average by the left-end
    value ``Z_{t_{i-1}}`` (any other measurable choice can only be worse).
    """
    fine = ref.fine
    idx = fine.coarse_index_map(coarse)
    z = np.stack([ref.at(j, X[:, j, 0]) for j in range(fine.n + 1)], axis=1)
    stat = np.zeros(X.shape[0])
    for i in range(coarse.n):
        lo, hi = idx[i], idx[i + 1]
        if candidate == "ztilde":
            zt = GridFunction(ref.grid, ref.averaged_table(lo, hi))(X[:, lo, 0])
        elif candidate == "left":
            zt = z[:, lo]
        else:
            raise InvalidArgumentError(f"unknown candidate {candidate!r}")
        w = trapezoid_weights(fine, lo, hi)
        stat += ((z[:, lo : hi + 1] - zt[:, None]) ** 2) @ w
    return stat


def y_modulus(Y: np.ndarray, fine: Partition, coarse: Partition) -> np.ndarray:
    """Per-path ``max_i max_{s in [t_{i-1}, t_i]} |Y_s - Y_{t_{i-1}}|^2`` on the fine grid."""
    idx = fine.coarse_index_map(coarse)
    out = np.zeros(Y.shape[0])
    for i in range(coarse.n):
        lo, hi = idx[i], idx[i + 1]
        seg = np.max((Y[:, lo : hi + 1] - Y[:, lo : lo + 1]) ** 2, axis=1)
        np.maximum(out, seg, out=out)
    return out


def _fine_solution(preset, spec, fine, noise, fw):
    if preset.y_discrete is not None:
        return preset.y_discrete(fine, fw.values, noise.dB)
    return backward_sweep(spec, fine, fw, noise, QuadratureProvider(spec)).Y


def _z_reference(preset, spec, fine, noise, seed):
    if preset.z_continuous is not None:
        return ZReference.from_closed_form(spec, fine, preset.z_continuous)
    return ZReference.from_quadrature(spec, fine, noise.dB, seed)


def _mse(a):
    return float(a.mean()), float(a.std(ddof=1) / np.sqrt(a.size)) if a.size > 1 else 0.0


def l2_regularity_stat(preset: Preset, levels, M: int, seed: int, T: float = 1.0,
                       with_y: bool = True) -> RegularityReport:
    """Z-regularity statistic (and the Y modulus) per level with slopes."""
    levels = _check_levels(levels)
    spec, fine, noise, fw = _fine_setup(preset, levels, M, seed, T)
    ref = _z_reference(preset, spec, fine, noise, seed)
    Y = _fine_solution(preset, spec, fine, noise, fw) if with_y else None
    zs, zse, ys, yse = [], [], [], []
    for n in levels:
        coarse = make_uniform_partition(T, n)
        m, s = _mse(z_regularity(ref, fw.values, coarse))
        zs.append(m)
        zse.append(s)
        if with_y:
            m, s = _mse(y_modulus(Y, fine, coarse))
        else:
            m, s = float("nan"), float("nan")
        ys.append(m)
        yse.append(s)
    mesh = np.array([T / n for n in levels])
    zs, ys = np.array(zs), np.array(ys)
    z_fit = fit_slope(mesh, zs) if np.all(zs > 0) else None
    y_fit = fit_slope(mesh, ys) if with_y and np.all(ys > 0) else None
    return RegularityReport(levels, mesh, zs, np.array(zse), ys, np.array(yse), z_fit, y_fit, fine.mesh)


def y_modulus_stat(preset: Preset, levels, M: int, seed: int, T: float = 1.0):
    """Per-level Y-modulus means, standard errors and the log-log slope."""
    levels = [int(v) for v in levels]
    if not levels:
        raise InvalidArgumentError("need at least one level")
    spec, fine, noise, fw = _fine_setup(preset, levels, M, seed, T)
    Y = _fine_solution(preset, spec, fine, noise, fw)
    stats = [_mse(y_modulus(Y, fine, make_uniform_partition(T, n))) for n in levels]
    mean = np.array([s[0] for s in stats])
    se = np.array([s[1] for s in stats])
    mesh = np.array([T / n for n in levels])
    fit = fit_slope(mesh, mean) if len(levels) >= 2 and np.all(mean > 0) else None
    return mean, se, fit
