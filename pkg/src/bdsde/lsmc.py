"""Truncated regression scheme and the studies built on it: bootstrap
errors, regression-gap probes and controlled perturbations."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng
from .backward import BackwardGrid, backward_sweep
from .condexp import CondExpProvider, CondExpRequest, PerturbedProvider, QuadratureProvider, RegressionProvider
from .errors import InvalidArgumentError, UnsupportedDimensionError
from .forward import ForwardEnsemble, simulate_forward
from .io import write_csv
from .noise import NoiseGrid, sample_noise
from .problem import Partition, ProblemSpec, make_uniform_partition
from .regression import RegressionSpec, TruncationLedger, truncation_ledger
from .stats import SlopeFit, fit_slope


def regression_sweep(spec: ProblemSpec, partition: Partition, forward: ForwardEnsemble, noise: NoiseGrid,
                     reg_spec: RegressionSpec | None = None, ledger: TruncationLedger | None = None,
                     provider: CondExpProvider | None = None, truncate: bool = True) -> BackwardGrid:
    """Backward induction with regression estimates clamped to the a priori bands.

    The ledger defaults to the one built from the realized backward noise
    with ``C = K``.  ``provider`` replaces the regression estimator (for
    instance by an exact oracle).
    """
    if ledger is None and truncate:
        ledger = truncation_ledger(partition, noise.dB, spec.K)
    provider = provider or RegressionProvider(reg_spec or RegressionSpec())
    return backward_sweep(spec, partition, forward, noise, provider, ledger=ledger if truncate else None)


def bootstrap_y0(spec: ProblemSpec, partition: Partition, forward: ForwardEnsemble, noise: NoiseGrid,
                 reg_spec: RegressionSpec | None = None, n_boot: int = 20, seed: int = 0,
                 truncate: bool = True) -> tuple[float, float]:
    """``Y_{t_0}`` from the regression scheme and its bootstrap standard error.

    Paths are resampled with replacement and the whole sweep is refitted on
    every resample.
    """
    base = regression_sweep(spec, partition, forward, noise, reg_spec, truncate=truncate)
    y0 = float(np.mean(base.Y[:, 0]))
    M = forward.M
    key = rng.derive_key(seed, rng.BOOTSTRAP)
    draws = np.empty(n_boot)
    for b in range(n_boot):
        u = rng.uniforms(key, 1, M, row_offset=b)[0]
        idx = np.minimum((u * M).astype(np.int64), M - 1)
        fw = ForwardEnsemble(forward.values[idx], partition, noise.subset(idx))
        sol = regression_sweep(spec, partition, fw, fw.noise, reg_spec, truncate=truncate)
        draws[b] = float(np.mean(sol.Y[:, 0]))
    return y0, float(draws.std(ddof=1))


class ProbeProvider(CondExpProvider):
    """Drives the sweep with ``estimator`` and records its gap to ``oracle``.

    The oracle's auxiliary grid is carried along, so the oracle integrates
    exactly the function the estimator produced at the previous step.
    """

    name = "probe"
    supports_per_path_b = False

    def __init__(self, oracle: CondExpProvider, estimator: CondExpProvider, p: float = 2.0):
        self.oracle, self.estimator, self.p = oracle, estimator, p
        self.gaps: dict = {}

    def aux_states(self):
        return self.oracle.aux_states()

    def estimate(self, req: CondExpRequest) -> np.ndarray:
        est = self.estimator.estimate(req)
        ref = self.oracle.estimate(req)
        m = req.n_samples
        gap = float(np.mean(np.abs(est[:m] - ref[:m]) ** self.p) ** (1.0 / self.p))
        slot = "Y" if req.component is None else "ZW"
        self.gaps.setdefault(req.step, {})[slot] = max(gap, self.gaps.get(req.step, {}).get(slot, 0.0))
        return est


@dataclass
class ProbeReport:
    steps: list
    gap_y: np.ndarray
    gap_zw: np.ndarray
    p: float
    M: int
    mesh: float
    C: float = 1.0

    @property
    def aggregate_bound(self) -> float:
        """``(C / |pi|) * max_j max(gap_Y, gap_ZW)``."""
        top = max(float(np.max(self.gap_y)), float(np.max(self.gap_zw))) if self.steps else 0.0
        return self.C / self.mesh * top

    def to_csv(self, path) -> None:
        rows = [[s, self.gap_y[k], self.gap_zw[k], self.p, self.M] for k, s in enumerate(self.steps)]
        rows.append(["aggregate", self.aggregate_bound, "", self.p, self.M])
        write_csv(path, ["step", "gap_Y_Lp", "gap_ZW_Lp", "p", "M"], rows)


def regression_error_probe(oracle: CondExpProvider, estimator: CondExpProvider, spec: ProblemSpec,
                           partition: Partition, forward: ForwardEnsemble, noise: NoiseGrid,
                           steps=None, p: float = 2.0, C: float = 1.0) -> ProbeReport:
    """Per-step ``L^p`` norms of ``(E_hat - E)[Ytilde]`` and ``(E_hat - E)[Ytilde dW]``.

    Raises:
        UnsupportedDimensionError: if the problem is not one-dimensional
            (the oracle is a one-dimensional quadrature).
    """
    if spec.d != 1:
        raise UnsupportedDimensionError("the probe needs a one-dimensional oracle")
    probe = ProbeProvider(oracle, estimator, p)
    backward_sweep(spec, partition, forward, noise, probe)
    wanted = sorted(probe.gaps) if steps is None else list(steps)
    gy = np.array([probe.gaps[s]["Y"] for s in wanted])
    gz = np.array([probe.gaps[s]["ZW"] for s in wanted])
    return ProbeReport(wanted, gy, gz, p, forward.M, partition.mesh, C)


@dataclass
class DecayReport:
    Ms: list
    gap_y: np.ndarray
    gap_zw: np.ndarray
    fit_y: SlopeFit | None
    fit_zw: SlopeFit | None

    def to_csv(self, path) -> None:
        rows = [[m, self.gap_y[k], self.gap_zw[k]] for k, m in enumerate(self.Ms)]
        for name, fit in (("slope_Y", self.fit_y), ("slope_ZW", self.fit_zw)):
            if fit is not None:
                rows.append([name, fit.slope, fit.half_width])
        write_csv(path, ["M", "max_gap_Y", "max_gap_ZW"], rows)


def gap_decay(spec: ProblemSpec, n: int, Ms, seed: int, reg_spec: RegressionSpec | None = None,
              p: float = 2.0) -> DecayReport:
    """Largest regression gap over steps as the sample size grows."""
    part = make_uniform_partition(spec.T, n)
    gy, gz = [], []
    for M in Ms:
        noise = sample_noise(part, spec.d, spec.ell, int(M), seed)
        fw = simulate_forward(spec, part, noise)
        rep = regression_error_probe(QuadratureProvider(spec), RegressionProvider(reg_spec), spec, part,
                                     fw, noise, p=p)
        gy.append(float(np.max(rep.gap_y)))
        gz.append(float(np.max(rep.gap_zw)))
    gy, gz = np.array(gy), np.array(gz)
    fy = fit_slope(Ms, gy) if np.all(gy > 0) else None
    fz = fit_slope(Ms, gz) if np.all(gz > 0) else None
    return DecayReport(list(Ms), gy, gz, fy, fz)


@dataclass
class PerturbationReport:
    """``gap[k, j]``: L2 norm over backward-noise draws of ``Y0(eps_j) - Y0``
    on ``n = ns[k]``."""

    ns: list
    eps: list
    gap: np.ndarray
    exponents: np.ndarray = field(default=None)
    constants: np.ndarray = field(default=None)  # gap * |pi| / eps

    def to_csv(self, path) -> None:
        rows = []
        for k, n in enumerate(self.ns):
            for j, e in enumerate(self.eps):
                rows.append([n, 1.0 / n, e, self.gap[k, j], self.constants[k, j], self.exponents[k]])
        write_csv(path, ["n", "mesh", "eps", "gap_Y0_L2", "fitted_C", "exponent"], rows)


def perturbation_study(spec: ProblemSpec, ns=(4, 8, 16), eps=(1e-4, 1e-3, 1e-2), seed: int = 0,
                       M: int = 64, realizations: int = 8, truncate: bool = True) -> PerturbationReport:
    """Shift every oracle estimate by ``eps`` and measure the change in ``Y_{t_0}``."""
    if spec.d != 1:
        raise UnsupportedDimensionError("the perturbation study uses the one-dimensional oracle")
    ns, eps = [int(v) for v in ns], [float(v) for v in eps]
    if len(eps) < 2:
        raise InvalidArgumentError("need at least two perturbation sizes")
    gap = np.zeros((len(ns), len(eps)))
    for k, n in enumerate(ns):
        part = make_uniform_partition(spec.T, n)
        sq = np.zeros(len(eps))
        for r in range(realizations):
            noise = sample_noise(part, spec.d, spec.ell, M, rng.derive_key(seed, rng.REALIZATION, r))
            fw = simulate_forward(spec, part, noise)
            oracle = QuadratureProvider(spec)
            base = regression_sweep(spec, part, fw, noise, provider=oracle, truncate=truncate)
            for j, e in enumerate(eps):
                pert = regression_sweep(spec, part, fw, noise, provider=PerturbedProvider(oracle, e),
                                        truncate=truncate)
                sq[j] += float(np.mean((pert.Y[:, 0] - base.Y[:, 0]) ** 2))
        gap[k] = np.sqrt(sq / realizations)
    logs = np.log(np.array(eps))
    exps = np.array([np.polyfit(logs, np.log(gap[k]), 1)[0] for k in range(len(ns))])
    mesh = np.array([spec.T / n for n in ns])
    consts = gap * mesh[:, None] / np.array(eps)[None, :]
    return PerturbationReport(ns, eps, gap, exps, consts)


ROUNDING = 1e-12  # differences below this (relative) count as agreement


@dataclass
class TriangulationReport:
    """``Y_{t_0}`` from three independent conditional-expectation routes.

    ``values`` and ``errors`` map a method name to the estimate and its
    standard error (zero for the deterministic quadrature).
    """

    n: int
    values: dict
    errors: dict

    def z_scores(self, reference: str = "quadrature") -> dict:
        ref, ref_se = self.values[reference], self.errors[reference]
        out = {}
        for name, v in self.values.items():
            if name == reference:
                continue
            se = float(np.hypot(self.errors[name], ref_se))
            diff = abs(v - ref)
            if diff <= ROUNDING * max(1.0, abs(ref)):
                out[name] = 0.0
            else:
                out[name] = diff / se if se > 0 else float("inf")
        return out

    def agree(self, k: float = 5.0) -> bool:
        return all(z <= k for z in self.z_scores().values())


def oracle_triangulation(spec: ProblemSpec, n: int = 3, M: int = 100_000, seed: int = 0,
                         M_in: int = 200, reg_spec: RegressionSpec | None = None,
                         n_boot: int = 20) -> TriangulationReport:
    """Quadrature, nested Monte Carlo and regression values of ``Y_{t_0}``.

    All three share one frozen backward-noise path.  The nested standard
    error is propagated through the implicit step by a central difference;
    the regression standard error is a path bootstrap.
    """
    from .scheme import picard_solve
    from .condexp import nested_mc_cond_exp

    if spec.d != 1:
        raise UnsupportedDimensionError("the quadrature oracle needs d = 1")
    part = make_uniform_partition(spec.T, n)
    noise = sample_noise(part, spec.d, spec.ell, M, seed)
    fw = simulate_forward(spec, part, noise)
    quad = backward_sweep(spec, part, fw, noise, QuadratureProvider(spec))
    values = {"quadrature": float(quad.Y[0, 0])}
    errors = {"quadrature": 0.0}

    x0 = np.asarray(spec.x0, float).reshape(1, -1)
    res = nested_mc_cond_exp(spec, part, noise.dB, seed, 1, x0, M_in)
    c, dt = spec.coefficients, part.steps[0]

    def y0(e):
        return float(picard_solve(c, 0.0, x0, np.atleast_1d(e), res.z, dt)[0][0])

    e, se = float(res.e_ytilde[0]), float(res.se_ytilde[0])
    values["nested"] = y0(e)
    errors["nested"] = abs(y0(e + se) - y0(e - se)) / 2 if se > 0 else 0.0

    y, y_se = bootstrap_y0(spec, part, fw, noise, reg_spec or RegressionSpec(degree=3), n_boot, seed,
                           truncate=False)
    values["regression"], errors["regression"] = y, y_se
    return TriangulationReport(n, values, errors)
