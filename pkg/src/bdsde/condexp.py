"""Conditional-expectation operators used by the backward scheme.

A provider receives a :class:`CondExpRequest` describing one backward step
and returns per-point estimates of either ``E_{i-1}[Ytilde_i]`` or
``E_{i-1}[Ytilde_i * dW_i^(k)]`` (not divided by the step size).

Providers may ask the sweep to carry auxiliary points (``aux_states``)
alongside the Monte Carlo paths.  These are fixed states that stay put in
time and receive zero noise; the quadrature provider uses them as its
spatial grid, so the sweep computes the value function on the grid with
exactly the same code that updates the paths.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.interpolate import CubicSpline

from . import rng
from .errors import (
    InvalidArgumentError,
    OutOfDomainError,
    ResourceLimitError,
    UnsupportedDimensionError,
)
from .forward import _advance
from .io import write_csv
from .problem import Partition, ProblemSpec
from .regression import RegressionSpec, fit_regression
from .scheme import backward_noise_term, picard_solve

NESTED_BUDGET = 10**8


@dataclass
class CondExpRequest:
    """One conditional expectation at step ``i`` (conditioning on ``t_{i-1}``).

    Attributes:
        step: index ``i`` of the increment ``dW_i`` over ``[t_{i-1}, t_i]``.
        t_prev, dt: ``t_{i-1}`` and the step size.
        ytilde: (N,) values of ``Ytilde_i`` at every point.
        dW: (N, d) forward increments (zero on auxiliary points).
        states: (N, d) conditioning states ``X_{t_{i-1}}``.
        b_states: (N, ell) ``B_{t_{i-1}}`` for per-path backward noise.
        component: ``None`` for ``E[Ytilde]``, ``k`` for ``E[Ytilde dW^(k)]``.
        n_samples: leading points that are Monte Carlo samples; the rest
            are auxiliary points.
    """

    step: int
    t_prev: float
    dt: float
    ytilde: np.ndarray
    dW: np.ndarray
    states: np.ndarray
    b_states: np.ndarray | None = None
    component: int | None = None
    n_samples: int | None = None

    def __post_init__(self):
        n = self.ytilde.shape[0]
        if self.states.shape[0] != n or self.dW.shape[0] != n:
            raise InvalidArgumentError("target and conditioning sample counts differ")
        if self.n_samples is None:
            self.n_samples = n

    @property
    def targets(self) -> np.ndarray:
        """Realisations of the integrand."""
        if self.component is None:
            return self.ytilde
        return self.ytilde * self.dW[:, self.component]

    def with_component(self, k: int | None) -> "CondExpRequest":
        return CondExpRequest(self.step, self.t_prev, self.dt, self.ytilde, self.dW, self.states,
                              self.b_states, k, self.n_samples)


class CondExpProvider:
    """Base class; subclasses implement :meth:`estimate`."""

    name = "provider"
    supports_per_path_b = True

    def aux_states(self) -> np.ndarray | None:
        return None

    def estimate(self, req: CondExpRequest) -> np.ndarray:  # pragma: no cover
        raise NotImplementedError


# --- one-dimensional interpolation and Gauss-Hermite ----------------------


class GridFunction:
    """Cubic spline through grid values with linear continuation outside."""

    def __init__(self, grid: np.ndarray, values: np.ndarray):
        self.grid = grid
        self.spline = CubicSpline(grid, values, bc_type="not-a-knot", extrapolate=True)
        d1 = self.spline.derivative()
        self.lo, self.hi = grid[0], grid[-1]
        self.v_lo, self.v_hi = float(values[0]), float(values[-1])
        self.s_lo, self.s_hi = float(d1(self.lo)), float(d1(self.hi))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, float)
        out = self.spline(np.clip(x, self.lo, self.hi))
        below, above = x < self.lo, x > self.hi
        if np.any(below):
            out[below] = self.v_lo + self.s_lo * (x[below] - self.lo)
        if np.any(above):
            out[above] = self.v_hi + self.s_hi * (x[above] - self.hi)
        return out


class GaussHermiteOperator:
    """One Euler step of expectation in one dimension.

    For states ``x`` returns ``E[F(x')]`` and ``E[F(x') dW]`` where
    ``x' = x + b dt + sigma dW`` and ``dW ~ N(0, dt)``.
    """

    def __init__(self, spec: ProblemSpec, order: int = 21):
        if spec.d != 1:
            raise UnsupportedDimensionError("Gauss-Hermite quadrature is one-dimensional")
        if order < 3:
            raise InvalidArgumentError("quadrature order must be >= 3")
        self.spec = spec
        nodes, weights = hermegauss(order)
        self.nodes = nodes
        self.weights = weights / np.sqrt(2.0 * np.pi)

    def successors(self, t: float, dt: float, x: np.ndarray):
        """Node states (G, order) and the matching increments."""
        c = self.spec.coefficients
        xx = x.reshape(-1, 1)
        b = c.b(t, xx)[:, 0]
        s = c.sigma(t, xx)[:, 0, 0]
        dw = np.sqrt(dt) * self.nodes
        xp = (xx[:, 0] + b * dt)[:, None] + s[:, None] * dw[None, :]
        return xp, dw

    def expect(self, t: float, dt: float, x: np.ndarray, func) -> tuple[np.ndarray, np.ndarray]:
        xp, dw = self.successors(t, dt, x)
        vals = func(xp.reshape(-1)).reshape(xp.shape)
        e0 = vals @ self.weights
        e1 = (vals * dw[None, :]) @ self.weights
        return e0, e1


@dataclass
class Domain:
    """Query interval and the wider computational grid."""

    lo: float
    hi: float
    grid: np.ndarray
    margin: float

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def check(self, x: np.ndarray, step: int | None = None) -> None:
        pad = self.margin * self.width
        bad = (x < self.lo - pad) | (x > self.hi + pad)
        if np.any(bad):
            p = int(np.argmax(bad))
            err = OutOfDomainError(
                f"state {x[p]:.6g} outside [{self.lo - pad:.6g}, {self.hi + pad:.6g}]")
            raise err.with_context(step=step, path=p)


def default_domain(spec: ProblemSpec, nodes: int = 257, margin: float = 0.1,
                   pad_sd: float = 4.0) -> Domain:
    """Grid around ``x0`` wide enough for the forward diffusion.

    The diffusion scale is the largest ``|sigma(0, x)|`` over a first guess
    of the interval; the interval is shifted outwards by the drift at
    ``x0`` and padded by ``pad_sd`` scales so that edge effects of the
    linear continuation stay outside the query interval.
    """
    if nodes < 5:
        raise InvalidArgumentError("need at least 5 grid nodes")
    c = spec.coefficients
    x0 = float(spec.x0[0])
    rt = np.sqrt(spec.T)
    s0 = abs(float(c.sigma(0.0, np.array([[x0]]))[0, 0, 0]))
    probe = np.linspace(x0 - 6 * s0 * rt, x0 + 6 * s0 * rt, 65).reshape(-1, 1)
    scale = float(np.max(np.abs(c.sigma(0.0, probe)[:, 0, 0])))
    scale = max(scale, s0, 1e-3)
    drift = abs(float(c.b(0.0, np.array([[x0]]))[0, 0])) * spec.T
    half = 6 * scale * rt + drift
    lo, hi = x0 - half, x0 + half
    h = (hi - lo) / (nodes - 1)
    extra = int(np.ceil(pad_sd * scale * rt / h))
    grid = lo + h * np.arange(-extra, nodes + extra)
    return Domain(lo, hi, grid, margin)


@dataclass
class ValueTable:
    """Grid values ``u_i(x)`` of Y and ``v_i(x)`` of Z, one row per step."""

    grid: np.ndarray
    u: np.ndarray
    v: np.ndarray
    partition: Partition

    def u_func(self, i: int) -> GridFunction:
        return GridFunction(self.grid, self.u[i])

    def v_func(self, i: int) -> GridFunction:
        return GridFunction(self.grid, self.v[i])

    def to_csv(self, path) -> None:
        rows = ([i, x, self.u[i, j], self.v[i, j]]
                for i in range(self.u.shape[0]) for j, x in enumerate(self.grid))
        write_csv(path, ["step", "x", "u", "v"], rows)


def quadrature_cond_exp(table: ValueTable, step: int, spec: ProblemSpec, dB_i, x,
                        order: int = 21, domain: Domain | None = None):
    """Both conditional expectations at states ``x`` from a value table.

    ``Ytilde = u_i(x') + g(t_i, x', u_i(x')) . dB_i`` is integrated over the
    Gaussian increment.  Returns ``(E[Ytilde], E[Ytilde dW] / dt)``.
    """
    op = GaussHermiteOperator(spec, order)
    part = table.partition
    t_prev, t_i = part.times[step - 1], part.times[step]
    dt = t_i - t_prev
    x = np.atleast_1d(np.asarray(x, float)).reshape(-1)
    if domain is None:
        g0, g1 = table.grid[0], table.grid[-1]
        domain = Domain(g0, g1, table.grid, 0.1)
    domain.check(x, step)
    u = table.u_func(step)
    dB_i = np.atleast_1d(np.asarray(dB_i, float))

    def ytilde(xp):
        y = u(xp)
        return y + backward_noise_term(spec.coefficients, t_i, xp.reshape(-1, 1), y, dB_i)

    e0, e1 = op.expect(t_prev, dt, x, ytilde)
    return e0, e1 / dt


class QuadratureProvider(CondExpProvider):
    """Gauss-Hermite integration of a spline through the grid values.

    Works for one-dimensional problems with frozen backward noise.  The
    sweep supplies ``Ytilde`` on the grid through the auxiliary points; the
    provider integrates its spline over the Gaussian step for every grid
    node and interpolates those results at the sample states.
    """

    name = "quadrature"
    supports_per_path_b = False

    def __init__(self, spec: ProblemSpec, order: int = 21, nodes: int = 257, margin: float = 0.1,
                 domain: Domain | None = None):
        if spec.d != 1:
            raise UnsupportedDimensionError("the quadrature provider needs d = 1")
        self.spec = spec
        self.op = GaussHermiteOperator(spec, order)
        self.domain = domain or default_domain(spec, nodes, margin)
        self._cache: dict = {}

    def aux_states(self) -> np.ndarray:
        return self.domain.grid.reshape(-1, 1)

    def tables(self, req: CondExpRequest) -> tuple[np.ndarray, np.ndarray]:
        grid = self.domain.grid
        aux = req.ytilde[req.n_samples:]
        if aux.shape[0] != grid.size:
            raise InvalidArgumentError("request does not carry the quadrature grid")
        key = (req.step, req.t_prev, req.dt, aux.tobytes())
        hit = self._cache.get("last")
        if hit is not None and hit[0] == key:
            return hit[1]
        e0, e1 = self.op.expect(req.t_prev, req.dt, grid, GridFunction(grid, aux))
        self._cache["last"] = (key, (e0, e1))
        return e0, e1

    def estimate(self, req: CondExpRequest) -> np.ndarray:
        if req.component not in (None, 0):
            raise UnsupportedDimensionError("the quadrature provider needs d = 1")
        e0, e1 = self.tables(req)
        table = e0 if req.component is None else e1
        m = req.n_samples
        x = req.states[:m, 0]
        self.domain.check(x, req.step)
        out = np.empty(req.ytilde.shape[0])
        out[:m] = GridFunction(self.domain.grid, table)(x)
        out[m:] = table
        return out


# --- nested Monte Carlo ------------------------------------------------------


@dataclass
class NestedResult:
    e_ytilde: np.ndarray
    z: np.ndarray
    se_ytilde: np.ndarray
    se_z: np.ndarray


def _picard(spec, t, x, e, z, dt):
    return picard_solve(spec.coefficients, t, x, e, z, dt)[0]


def nested_mc_cond_exp(spec: ProblemSpec, partition: Partition, dB, seed: int, step: int, x,
                       M_in: int = 200, budget: int = NESTED_BUDGET) -> NestedResult:
    """Brute-force ``E_{step-1}[Ytilde_step]`` and ``Z_{step-1}`` at states ``x``.

    Every later value ``Y_j`` is itself recomputed by fresh inner
    simulation with ``M_in`` increments per node, down to the terminal
    time, with the same backward increments ``dB`` (frozen mode).  The cost
    is ``len(x) * M_in ** (n - step + 1)`` integrand evaluations.

    Raises:
        ResourceLimitError: if the cost exceeds ``budget``.
    """
    if M_in < 2:
        raise InvalidArgumentError("need at least 2 inner samples")
    n = partition.n
    if not 1 <= step <= n:
        raise InvalidArgumentError(f"step must lie in 1..{n}")
    dB = np.asarray(dB, float).reshape(n, -1)
    x = np.asarray(x, float).reshape(-1, spec.d)
    depth = n - step + 1
    cost = sum(x.shape[0] * M_in**k for k in range(1, depth + 1))
    if cost > budget:
        raise ResourceLimitError(f"nested Monte Carlo needs {cost:.3g} evaluations > {budget:.3g}")
    key = rng.derive_key(seed, rng.NESTED, step)
    c = spec.coefficients
    times, steps = partition.times, partition.steps

    def y_at(j, states):
        if j == n:
            return spec.terminal.pointwise(states)
        e, z, _, _ = cond(j + 1, states)
        return _picard(spec, times[j], states, e, z, steps[j])

    def cond(i, states):
        K = states.shape[0]
        dt = steps[i - 1]
        rows = K * M_in
        # row r of this level's stream belongs to node r // M_in
        zi = rng.normals(rng.derive_key(key, i), rows, spec.d).reshape(K, M_in, spec.d)
        dw = np.sqrt(dt) * zi
        xs = np.repeat(states, M_in, axis=0)
        xn = _advance(c, times[i - 1], dt, xs, dw.reshape(rows, spec.d))
        y = y_at(i, xn)
        yt = (y + backward_noise_term(c, times[i], xn, y, dB[i - 1])).reshape(K, M_in)
        e = yt.mean(axis=1)
        # centred (sample covariance) form: unbiased, and exact for constant targets
        prod = (yt - e[:, None])[:, :, None] * dw / dt
        z = prod.sum(axis=1) / (M_in - 1)
        se_e = yt.std(axis=1, ddof=1) / np.sqrt(M_in)
        se_z = prod.std(axis=1, ddof=1) / np.sqrt(M_in)
        return e, z, se_e, se_z

    e, z, se_e, se_z = cond(step, x)
    return NestedResult(e, z, se_e, se_z)


class NestedMCProvider(CondExpProvider):
    """Provider backed by :func:`nested_mc_cond_exp` (frozen backward noise).

    It ignores the sweep's own targets and recomputes everything from the
    problem data, so it is only affordable for very short partitions.
    Distinct conditioning states are evaluated once.
    """

    name = "nested"
    supports_per_path_b = False

    def __init__(self, spec: ProblemSpec, partition: Partition, dB, seed: int, M_in: int = 200,
                 budget: int = NESTED_BUDGET):
        if M_in < 100:
            raise InvalidArgumentError("nested Monte Carlo needs M_in >= 100")
        self.spec, self.partition, self.dB = spec, partition, np.asarray(dB, float)
        if self.dB.ndim != 2:
            raise InvalidArgumentError("nested Monte Carlo needs one frozen dB sequence")
        self.seed, self.M_in, self.budget = seed, M_in, budget
        self.last: dict = {}

    def _result(self, req: CondExpRequest):
        key = (req.step, req.states.tobytes())
        if key not in self.last:
            uniq, inverse = np.unique(req.states, axis=0, return_inverse=True)
            res = nested_mc_cond_exp(self.spec, self.partition, self.dB, self.seed, req.step,
                                     uniq, self.M_in, self.budget)
            self.last = {key: (res, inverse.reshape(-1))}
        return self.last[key]

    def estimate(self, req: CondExpRequest) -> np.ndarray:
        res, inv = self._result(req)
        if req.component is None:
            return res.e_ytilde[inv]
        return res.z[inv, req.component] * req.dt

    def standard_errors(self, req: CondExpRequest) -> np.ndarray:
        res, inv = self._result(req)
        if req.component is None:
            return res.se_ytilde[inv]
        return res.se_z[inv, req.component] * req.dt


# --- regression and wrappers -------------------------------------------------


class RegressionProvider(CondExpProvider):
    """Least-squares projection fitted on the Monte Carlo samples.

    ``E[Ytilde dW]`` is regressed after centring ``Ytilde`` by its own
    fitted conditional mean (a control variate with zero expectation).
    """

    name = "regression"

    def __init__(self, reg_spec: RegressionSpec | None = None):
        self.reg_spec = reg_spec or RegressionSpec()

    def regressors(self, req: CondExpRequest) -> np.ndarray:
        if self.reg_spec.regressors == "x-b":
            if req.b_states is None:
                raise InvalidArgumentError("(X, B) regressors need per-path backward noise")
            return np.hstack([req.states, req.b_states])
        return req.states

    def estimate(self, req: CondExpRequest) -> np.ndarray:
        m = req.n_samples
        reg = self.regressors(req)
        if req.component is None:
            targets = req.ytilde[:m]
        else:
            # E[(Ytilde - E[Ytilde | X]) dW | X] = E[Ytilde dW | X]; centring by
            # the fitted mean removes most of the variance and is exact for
            # targets in the span of the basis.
            mean = fit_regression(req.ytilde[:m], reg[:m], self.reg_spec).predict(reg[:m])
            targets = (req.ytilde[:m] - mean) * req.dW[:m, req.component]
        return fit_regression(targets, reg[:m], self.reg_spec).predict(reg)


@dataclass
class PerturbedProvider(CondExpProvider):
    """Adds a constant ``eps`` to every estimate of ``base``."""

    base: CondExpProvider
    eps: float
    name: str = field(default="perturbed")

    def __post_init__(self):
        self.supports_per_path_b = self.base.supports_per_path_b

    def aux_states(self):
        return self.base.aux_states()

    def estimate(self, req: CondExpRequest) -> np.ndarray:
        return self.base.estimate(req) + self.eps


PROVIDER_KINDS = ("quadrature", "nested", "nested-mc", "regression")


def make_provider(kind: str, config: dict | None = None) -> CondExpProvider:
    """Build a provider from a kind name and a config mapping.

    Recognised keys: ``spec`` (required for quadrature and nested),
    ``order``, ``nodes``, ``margin``; ``partition``, ``dB``, ``seed``,
    ``inner_paths`` for nested; ``regression`` (a :class:`RegressionSpec`)
    or ``basis_degree`` for regression.
    """
    cfg = dict(config or {})
    if kind == "quadrature":
        spec = cfg["spec"]
        if spec.d != 1:
            raise UnsupportedDimensionError("the quadrature provider needs d = 1")
        return QuadratureProvider(spec, cfg.get("order", 21), cfg.get("nodes", 257),
                                  cfg.get("margin", 0.1))
    if kind in ("nested", "nested-mc"):
        return NestedMCProvider(cfg["spec"], cfg["partition"], cfg["dB"], cfg.get("seed", 0),
                                cfg.get("inner_paths", 200))
    if kind == "regression":
        reg = cfg.get("regression")
        if reg is None:
            reg = RegressionSpec(degree=int(cfg.get("basis_degree", 3)))
        return RegressionProvider(reg)
    raise InvalidArgumentError(f"unknown provider kind {kind!r}")
