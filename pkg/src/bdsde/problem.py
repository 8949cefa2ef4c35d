"""Problem definition: time partitions, coefficients, terminal conditions.

Coefficient callables are vectorised over a leading batch axis:

* ``drift(t, x)`` with ``x`` of shape ``(M, d)`` returns ``(M, d)``
* ``diffusion(t, x)`` returns ``(M, d, d)``
* ``driver(t, x, y, z)`` with ``y`` of shape ``(M,)`` and ``z`` of shape
  ``(M, d)`` returns ``(M,)``
* ``backward_driver(t, x, y)`` returns ``(M, ell)``
* a pointwise terminal ``h(x)`` returns ``(M,)``; a path functional
  ``h_path(paths)`` takes ``(M, n + 1, d)`` and returns ``(M,)``

Callables must be pure and act row by row; results of the library do not
depend on how paths are chunked only if this holds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidArgumentError

LIPSCHITZ_RTOL = 1e-8

Array = np.ndarray


@dataclass(frozen=True, eq=False)
class Partition:
    """Time grid ``0 = t_0 < t_1 < ... < t_n = T``."""

    times: Array

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise InvalidArgumentError("a partition needs at least two times (n >= 1)")
        if times[0] != 0.0:
            raise InvalidArgumentError(f"partition must start at 0, got {times[0]!r}")
        if not np.all(np.diff(times) > 0):
            raise InvalidArgumentError("partition times must be strictly increasing")
        times.setflags(write=False)
        object.__setattr__(self, "times", times)

    @property
    def n(self) -> int:
        return self.times.size - 1

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def steps(self) -> Array:
        return np.diff(self.times)

    @property
    def mesh(self) -> float:
        return float(self.steps.max())

    def index_of(self, t: float, atol: float = 1e-12) -> int:
        """Grid index of ``t``; raises if ``t`` is not a grid time."""
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > atol * max(1.0, self.T):
            raise InvalidArgumentError(f"time {t!r} is not a grid point")
        return i

    def refines(self, coarse: "Partition") -> bool:
        """True when every time of ``coarse`` is also a time of ``self``."""
        if not np.isclose(self.T, coarse.T, rtol=1e-12, atol=0):
            return False
        tol = 1e-12 * max(1.0, self.T)
        j = np.searchsorted(self.times, coarse.times - tol)
        j = np.minimum(j, self.n)
        return bool(np.all(np.abs(self.times[j] - coarse.times) <= tol))

    def coarse_index_map(self, coarse: "Partition") -> Array:
        """Fine-grid index of every coarse time (requires nesting)."""
        if not self.refines(coarse):
            raise InvalidArgumentError("partitions are not nested")
        tol = 1e-12 * max(1.0, self.T)
        return np.searchsorted(self.times, coarse.times - tol)

    def __repr__(self) -> str:
        return f"Partition(n={self.n}, T={self.T:g}, mesh={self.mesh:g})"


def make_uniform_partition(T: float, n: int) -> Partition:
    if not (T > 0) or not np.isfinite(T):
        raise InvalidArgumentError(f"horizon must be positive, got {T!r}")
    if int(n) != n or n < 1:
        raise InvalidArgumentError(f"step count must be a positive integer, got {n!r}")
    n = int(n)
    times = np.linspace(0.0, float(T), n + 1)
    times[-1] = float(T)
    return Partition(times)


@dataclass(frozen=True)
class CoefficientSet:
    drift: Callable
    diffusion: Callable
    driver: Callable
    backward_driver: Callable
    lipschitz_K: float

    def __post_init__(self):
        if not self.lipschitz_K > 0:
            raise InvalidArgumentError("lipschitz_K must be positive")

    # Shape-normalising wrappers; user callables may return broadcastable output.
    def b(self, t: float, x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(self.drift(t, x), dtype=float), x.shape)

    def sigma(self, t: float, x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        m, d = x.shape
        out = np.asarray(self.diffusion(t, x), dtype=float)
        if out.shape == (m, d, d):
            return out
        if d == 1:
            return np.broadcast_to(out.reshape(-1), (m,)).reshape(m, 1, 1)
        return np.broadcast_to(out, (m, d, d))

    def f(self, t: float, x: Array, y: Array, z: Array) -> Array:
        out = np.asarray(self.driver(t, x, y, z), dtype=float)
        return np.broadcast_to(out, np.shape(y))

    def g(self, t: float, x: Array, y: Array, ell: int) -> Array:
        m = np.shape(y)[0]
        out = np.asarray(self.backward_driver(t, x, y), dtype=float)
        if out.ndim == 1 and ell == 1 and out.shape[0] == m:
            return out.reshape(m, 1)
        return np.broadcast_to(out, (m, ell))


@dataclass(frozen=True)
class TerminalCondition:
    """Either a pointwise ``h`` or a discrete path functional ``h_path``."""

    h: Callable | None = None
    h_path: Callable | None = None
    n_steps: int | None = None

    def __post_init__(self):
        if (self.h is None) == (self.h_path is None):
            raise InvalidArgumentError("give exactly one of h or h_path")

    @property
    def is_pointwise(self) -> bool:
        return self.h is not None

    def __call__(self, paths: Array) -> Array:
        """Evaluate on ``(M, n + 1, d)`` path values."""
        paths = np.asarray(paths, dtype=float)
        if self.is_pointwise:
            out = self.h(paths[:, -1, :])
        else:
            out = self.h_path(paths)
        return np.broadcast_to(np.asarray(out, dtype=float), paths.shape[:1]).copy()

    def pointwise(self, x: Array) -> Array:
        if not self.is_pointwise:
            raise InvalidArgumentError("terminal condition is path dependent")
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(self.h(x), dtype=float), x.shape[:1]).copy()


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    coefficients: CoefficientSet
    terminal: TerminalCondition
    d: int
    ell: int
    T: float
    x0: Array = field(default=None)

    def __post_init__(self):
        if self.d < 1 or self.ell < 1:
            raise InvalidArgumentError("dimensions d and ell must be positive")
        if not self.T > 0:
            raise InvalidArgumentError("horizon T must be positive")
        x0 = np.zeros(self.d) if self.x0 is None else np.asarray(self.x0, dtype=float).reshape(-1)
        if x0.shape != (self.d,):
            raise InvalidArgumentError(f"x0 has shape {x0.shape}, expected ({self.d},)")
        x0.setflags(write=False)
        object.__setattr__(self, "x0", x0)
        self._check_signatures()

    def _check_signatures(self) -> None:
        c = self.coefficients
        x = np.tile(self.x0, (2, 1))
        y = np.zeros(2)
        z = np.zeros((2, self.d))
        shapes = {
            "drift": c.b(0.0, x).shape,
            "diffusion": c.sigma(0.0, x).shape,
            "driver": c.f(0.0, x, y, z).shape,
            "backward_driver": c.g(0.0, x, y, self.ell).shape,
        }
        expected = {
            "drift": (2, self.d),
            "diffusion": (2, self.d, self.d),
            "driver": (2,),
            "backward_driver": (2, self.ell),
        }
        for name, shape in shapes.items():
            if shape != expected[name]:
                raise InvalidArgumentError(f"{name} returned shape {shape}, expected {expected[name]}")

    @property
    def K(self) -> float:
        return self.coefficients.lipschitz_K


@dataclass(frozen=True)
class ValidationReport:
    K: float
    lipschitz_ratios: dict
    origin_bounds: dict
    flagged: tuple

    @property
    def passed(self) -> bool:
        return not self.flagged

    def exceeds(self, K: float) -> tuple:
        """Names whose observed constant would be flagged at constant ``K``."""
        lim = K * (1 + LIPSCHITZ_RTOL)
        out = [k for k, v in self.lipschitz_ratios.items() if v > lim]
        if self.origin_bounds.get("H3_sum", 0.0) > lim:
            out.append("H3_sum")
        if self.origin_bounds.get("terminal_at_zero", 0.0) > lim:
            out.append("terminal_at_zero")
        return tuple(out)


def _ratio(num: Array, den: Array) -> float:
    ok = den > 0
    if not np.any(ok):
        return 0.0
    return float(np.max(num[ok] / den[ok]))


def validate_assumptions(
    spec: ProblemSpec,
    probes: int = 512,
    seed: int = 0,
    box: float = 5.0,
    partition: Partition | None = None,
) -> ValidationReport:
    """Probe the Lipschitz and origin-growth assumptions at random points.

    Half of the probe pairs are close (offset scale log-uniform in
    ``[1e-4, 1] * box``) to catch local slopes; the rest are independent
    points of the box ``[-box, box]``.  Report only; nothing raises.
    """
    if probes < 2:
        raise InvalidArgumentError("need at least two probes")
    rng = np.random.default_rng(seed)
    c, d, ell, T = spec.coefficients, spec.d, spec.ell, spec.T

    def pair(dim):
        a = rng.uniform(-box, box, size=(probes, dim))
        far = rng.uniform(-box, box, size=(probes, dim))
        scale = box * 10.0 ** rng.uniform(-4, 0, size=(probes, 1))
        near = a + scale * rng.standard_normal((probes, dim))
        close = np.arange(probes) % 2 == 0
        return a, np.where(close[:, None], near, far)

    t = rng.uniform(0.0, T, size=probes)
    ratios = {}

    x1, x2 = pair(d)
    dx = np.linalg.norm(x1 - x2, axis=1)
    db = np.empty(probes)
    ds = np.empty(probes)
    for k in range(probes):
        # time enters pointwise; evaluate probe by probe at its own t
        db[k] = np.linalg.norm(c.b(t[k], x1[k : k + 1]) - c.b(t[k], x2[k : k + 1]))
        ds[k] = np.linalg.norm(c.sigma(t[k], x1[k : k + 1]) - c.sigma(t[k], x2[k : k + 1]))
    ratios["drift"] = _ratio(db, dx)
    ratios["diffusion"] = _ratio(ds, dx)

    p1, p2 = pair(2 * d + 1)
    dfv = np.empty(probes)
    for k in range(probes):
        a, b_ = p1[k : k + 1], p2[k : k + 1]
        fa = c.f(t[k], a[:, :d], a[:, d], a[:, d + 1 :])
        fb = c.f(t[k], b_[:, :d], b_[:, d], b_[:, d + 1 :])
        dfv[k] = abs(fa[0] - fb[0])
    ratios["driver"] = _ratio(dfv, np.linalg.norm(p1 - p2, axis=1))

    q1, q2 = pair(d + 1)
    dg = np.empty(probes)
    for k in range(probes):
        ga = c.g(t[k], q1[k : k + 1, :d], q1[k : k + 1, d], ell)
        gb = c.g(t[k], q2[k : k + 1, :d], q2[k : k + 1, d], ell)
        dg[k] = np.linalg.norm(ga - gb)
    ratios["backward_driver"] = _ratio(dg, np.linalg.norm(q1 - q2, axis=1))

    term = spec.terminal
    origin = {}
    if term.is_pointwise:
        h1, h2 = pair(d)
        dh = np.abs(term.pointwise(h1) - term.pointwise(h2))
        ratios["terminal"] = _ratio(dh, np.linalg.norm(h1 - h2, axis=1))
        origin["terminal_at_zero"] = float(abs(term.pointwise(np.zeros((1, d)))[0]))
    else:
        n = partition.n if partition is not None else term.n_steps
        if n is None:
            raise InvalidArgumentError("a path functional needs the partition to be probed")
        ratios["terminal_gradient_sum"] = _path_gradient_sum(term, n, d, rng, box, probes)
        origin["terminal_at_zero"] = float(abs(term(np.zeros((1, n + 1, d)))[0]))

    zero_x = np.zeros((1, d))
    zero_y = np.zeros(1)
    bt = np.empty(probes)
    st = np.empty(probes)
    ft = np.empty(probes)
    gt = np.empty(probes)
    for k in range(probes):
        bt[k] = np.linalg.norm(c.b(t[k], zero_x))
        st[k] = np.linalg.norm(c.sigma(t[k], zero_x))
        ft[k] = abs(c.f(t[k], zero_x, zero_y, zero_x)[0])
        gt[k] = np.linalg.norm(c.g(t[k], zero_x, zero_y, ell))
    origin.update(
        drift_at_zero=float(bt.max()),
        diffusion_at_zero=float(st.max()),
        driver_at_zero=float(ft.max()),
        backward_driver_at_zero=float(gt.max()),
        H3_sum=float((bt + st + ft + gt).max()),
    )

    flagged = ValidationReport(spec.K, ratios, origin, ()).exceeds(spec.K)
    return ValidationReport(spec.K, ratios, origin, flagged)


def _path_gradient_sum(term, n, d, rng, box, probes, eps=1e-6) -> float:
    m = min(probes, 64)
    paths = rng.uniform(-box, box, size=(m, n + 1, d))
    h = eps * box
    total = np.zeros(m)
    for i in range(n + 1):
        grad = np.zeros((m, d))
        for k in range(d):
            up = paths.copy()
            dn = paths.copy()
            up[:, i, k] += h
            dn[:, i, k] -= h
            grad[:, k] = (term(up) - term(dn)) / (2 * h)
        total += np.linalg.norm(grad, axis=1)
    return float(total.max())
