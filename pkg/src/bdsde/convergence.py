"""Convergence study of the backward scheme against a fine reference.

For each backward-noise realization the noise is drawn on the finest
level, bridged to four times that resolution for the reference solution,
and summed up to every coarser level.  Errors are averaged over paths and
realizations, since the rate statement takes the expectation over both
noises.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng
from .backward import backward_sweep
from .condexp import QuadratureProvider, make_provider
from .errors import InvalidArgumentError
from .forward import simulate_forward
from .io import write_csv
from .noise import FROZEN, brownian_bridge_refine, coarsen, sample_noise
from .presets import Preset
from .problem import make_uniform_partition
from .regression import RegressionSpec, truncation_ledger
from .stats import SlopeFit, fit_slope


# Squared errors below this are rounding (absolute errors of about 1e-12).
EXACT_FLOOR = 1e-24


@dataclass
class ConvergenceReport:
    levels: list
    mesh: np.ndarray
    y_error: np.ndarray  # sup_i E|Y_i - Y_ref|^2
    z_error: np.ndarray  # E sum int |Z_ref - Z^pi|^2
    total_se: np.ndarray
    worst_step: np.ndarray
    fit: SlopeFit | None
    realizations: int
    paths: int
    reference_mesh: float = 0.0
    adjusted_fit: SlopeFit | None = None  # slope against |pi| - |pi_ref|
    notes: list = field(default_factory=list)

    @property
    def total(self) -> np.ndarray:
        return self.y_error + self.z_error

    @property
    def exact(self) -> bool:
        return bool(np.all(self.total <= EXACT_FLOOR))

    def within(self, lo: float, hi: float) -> bool:
        if self.exact:
            return True
        return self.fit is not None and self.fit.within(lo, hi)

    def to_csv(self, path) -> None:
        rows = [[k, n, self.mesh[k], self.y_error[k], self.z_error[k], self.total[k], self.total_se[k],
                 int(self.worst_step[k])] for k, n in enumerate(self.levels)]
        if self.fit is not None:
            rows.append(["slope", "", "", "", "", self.fit.slope, self.fit.half_width, ""])
        if self.adjusted_fit is not None:
            rows.append(["slope_vs_mesh_minus_ref", "", self.reference_mesh, "", "",
                         self.adjusted_fit.slope, self.adjusted_fit.half_width, ""])
        elif self.exact:
            rows.append(["slope", "", "", "", "", "exact", "", ""])
        write_csv(path, ["level", "n", "mesh", "y_err", "z_err", "total", "total_se", "worst_step"], rows)


def _level_solution(spec, part, noise, kind, reg_spec, truncate, seed, threads):
    fw = simulate_forward(spec, part, noise, threads)
    if kind == "quadrature":
        provider = QuadratureProvider(spec)
    else:
        provider = make_provider(kind, {"spec": spec, "partition": part, "dB": noise.dB, "seed": seed,
                                        "regression": reg_spec})
    ledger = truncation_ledger(part, noise.dB, spec.K) if truncate else None
    return fw, backward_sweep(spec, part, fw, noise, provider, ledger=ledger)


def run_convergence(preset: Preset, levels, M: int, seed: int, provider: str = "quadrature",
                    b_realizations: int = 25, reg_spec: RegressionSpec | None = None,
                    truncate: bool = False, mode: str = FROZEN, T: float = 1.0,
                    threads: int | None = None) -> ConvergenceReport:
    """Squared errors of the scheme per level against a 4x finer reference.

    Args:
        preset: problem to solve.
        levels: increasing, nested step counts.
        M: total number of forward paths, split evenly over realizations.
        seed: master seed.
        provider: conditional-expectation backend for the levels; the
            reference always uses quadrature.
        b_realizations: number of independent backward-noise paths.

    The acceptance statistic is the slope against ``|pi|``.  Because the
    reference is itself discretized, the error of a level behaves like
    ``a (|pi| - |pi_ref|) + b |pi|^2``; the slope against
    ``|pi| - |pi_ref|`` is reported alongside as a diagnostic.
    """
    levels = [int(v) for v in levels]
    if len(levels) < 2 or any(b <= a for a, b in zip(levels, levels[1:])):
        raise InvalidArgumentError("need at least two strictly increasing levels")
    if mode != FROZEN:
        raise InvalidArgumentError("the quadrature reference needs frozen backward noise")
    R = max(1, int(b_realizations))
    if M < R:
        raise InvalidArgumentError("need at least one path per realization")
    m = M // R
    spec = preset.spec(T)
    finest = make_uniform_partition(T, levels[-1])
    ref = make_uniform_partition(T, 4 * levels[-1])
    parts = [make_uniform_partition(T, n) for n in levels]
    for p in parts:
        if not finest.refines(p):
            raise InvalidArgumentError("levels must be nested")
    reg_spec = reg_spec or RegressionSpec()
    ysq = [np.zeros((R, p.n + 1)) for p in parts]
    zsum = np.zeros((R, len(parts)))
    h = ref.steps
    for r in range(R):
        rseed = rng.derive_key(seed, rng.REALIZATION, r)
        base = sample_noise(finest, spec.d, spec.ell, m, rseed, threads=threads)
        fine = brownian_bridge_refine(base, ref, threads=threads)
        _, sol_ref = _level_solution(spec, ref, fine, "quadrature", reg_spec, False, rseed, threads)
        for k, p in enumerate(parts):
            noise = base if p.n == finest.n else coarsen(fine, p)
            _, sol = _level_solution(spec, p, noise, provider, reg_spec, truncate, rseed, threads)
            idx = ref.coarse_index_map(p)
            ysq[k][r] = np.mean((sol.Y - sol_ref.Y[:, idx]) ** 2, axis=0)
            owner = np.searchsorted(idx, np.arange(ref.n), side="right") - 1
            dz = sol_ref.Z[:, :-1] - sol.Z[:, owner]
            zsum[r, k] = np.mean(np.sum(h[None, :] * np.sum(dz**2, axis=2), axis=1))
    y_err = np.empty(len(parts))
    worst = np.empty(len(parts), dtype=int)
    se = np.empty(len(parts))
    for k in range(len(parts)):
        mean_i = ysq[k].mean(axis=0)
        worst[k] = int(np.argmax(mean_i))
        y_err[k] = mean_i[worst[k]]
        per_r = ysq[k][:, worst[k]] + zsum[:, k]
        se[k] = per_r.std(ddof=1) / np.sqrt(R) if R > 1 else float("nan")
    z_err = zsum.mean(axis=0)
    total = y_err + z_err
    mesh = np.array([p.mesh for p in parts])
    fit = fit_slope(mesh, total) if np.all(total > EXACT_FLOOR) else None
    adjusted = fit_slope(mesh - ref.mesh, total) if fit is not None else None
    return ConvergenceReport(levels, mesh, y_err, z_err, se, worst, fit, R, m * R, ref.mesh, adjusted)
