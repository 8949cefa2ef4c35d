"""Backward induction for ``(Y, Z)`` against any conditional-expectation
provider, with optional truncation by the a priori bounds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .condexp import CondExpProvider, CondExpRequest, ValueTable
from .errors import BDSDEError, InvalidArgumentError, NumericOverflowError
from .forward import ForwardEnsemble
from .io import write_csv
from .noise import NoiseGrid
from .problem import CoefficientSet, Partition, ProblemSpec
from .regression import TruncationLedger
from .scheme import PICARD_MAX, PICARD_TOL, backward_noise_term, check_contraction, picard_solve


def tilde_y(y_i, t_i: float, x_i, dB_i, coeffs: CoefficientSet):
    """``y_i + g(t_i, x_i, y_i) . dB_i``; scalars or batches."""
    y = np.asarray(y_i, float)
    scalar = y.ndim == 0
    yb = np.atleast_1d(y)
    xb = np.asarray(x_i, float).reshape(yb.shape[0], -1)
    out = yb + backward_noise_term(coeffs, t_i, xb, yb, np.atleast_1d(np.asarray(dB_i, float)))
    return float(out[0]) if scalar else out


def z_update(provider: CondExpProvider, req: CondExpRequest, dt: float,
             ledger: TruncationLedger | None = None) -> np.ndarray:
    """``Z_{i-1} = E_{i-1}[Ytilde_i dW_i] / dt`` for every component.

    With a ledger the conditional expectation is clamped to the J band
    before the division.
    """
    if not dt > 0:
        raise InvalidArgumentError("step size must be positive")
    d = req.dW.shape[1]
    z = np.empty((req.ytilde.shape[0], d))
    try:
        for k in range(d):
            e = provider.estimate(req.with_component(k))
            if ledger is not None:
                bound = ledger.J(req.step - 1, req.states)
                e = np.clip(e, -bound, bound)
            z[:, k] = e / dt
    except BDSDEError as exc:
        raise exc.with_context(step=req.step)
    return z


def y_update(e, t_prev: float, x_prev, z, dt: float, coeffs: CoefficientSet,
             picard_tol: float = PICARD_TOL, picard_max: int = PICARD_MAX):
    """Implicit step ``y = e + f(t_prev, x_prev, y, z) dt``.

    Returns the solution (scalar for scalar ``e``) and the iteration count.

    Raises:
        MeshTooCoarseError: if ``K * dt >= 1``.
        NoConvergenceError: if Picard iteration stalls.
    """
    check_contraction(coeffs.lipschitz_K, dt)
    e_arr = np.asarray(e, float)
    scalar = e_arr.ndim == 0
    eb = np.atleast_1d(e_arr)
    m = eb.shape[0]
    xb = np.asarray(x_prev, float).reshape(m, -1)
    zb = np.asarray(z, float).reshape(m, -1)
    y, iters = picard_solve(coeffs, t_prev, xb, eb, zb, dt, picard_tol, picard_max)
    return (float(y[0]) if scalar else y), iters


@dataclass(frozen=True, eq=False)
class BackwardGrid:
    """Solution of a sweep: ``Y`` (M, n + 1), ``Z`` (M, n + 1, d).

    ``picard_iterations[i - 1]`` is the iteration count of step ``i``.  When
    the provider carried auxiliary grid points their values are kept in
    ``aux_Y`` / ``aux_Z``.
    """

    Y: np.ndarray
    Z: np.ndarray
    picard_iterations: np.ndarray
    partition: Partition
    aux_grid: np.ndarray | None = None
    aux_Y: np.ndarray | None = None
    aux_Z: np.ndarray | None = None

    @property
    def M(self) -> int:
        return self.Y.shape[0]

    def value_table(self) -> ValueTable:
        if self.aux_grid is None or self.aux_grid.shape[1] != 1:
            raise InvalidArgumentError("this sweep carried no one-dimensional grid")
        return ValueTable(self.aux_grid[:, 0], self.aux_Y, self.aux_Z[..., 0], self.partition)

    def to_csv(self, path) -> None:
        M, n1 = self.Y.shape
        d = self.Z.shape[2]
        t = self.partition.times
        rows = ([p, i, t[i], self.Y[p, i], *self.Z[p, i]] for p in range(M) for i in range(n1))
        write_csv(path, ["path_id", "step", "t", "y"] + [f"z_{k}" for k in range(d)], rows)


def backward_sweep(spec: ProblemSpec, partition: Partition, forward: ForwardEnsemble, noise: NoiseGrid,
                   provider: CondExpProvider, picard_tol: float = PICARD_TOL,
                   picard_max: int = PICARD_MAX, ledger: TruncationLedger | None = None) -> BackwardGrid:
    """Run the scheme from ``Y_n = h(X)``, ``Z_n = 0`` down to ``t_0``.

    At step ``i`` (from ``n`` to 1) the sweep forms ``Ytilde_i``, asks the
    provider for ``E[Ytilde dW]`` and ``E[Ytilde]`` given ``X_{t_{i-1}}``,
    sets ``Z_{i-1}`` and then solves the implicit equation for ``Y_{i-1}``.
    With a ledger every estimate is clamped to its band (J, R, then P on
    the result).
    """
    n, M, d = partition.n, forward.M, spec.d
    if noise.M != M or noise.partition.n != n or forward.partition.n != n:
        raise InvalidArgumentError("forward ensemble, noise and partition do not match")
    if not noise.frozen and not provider.supports_per_path_b:
        raise InvalidArgumentError(f"the {provider.name} provider needs frozen backward noise")
    coeffs = spec.coefficients
    for dt in partition.steps:
        check_contraction(coeffs.lipschitz_K, dt)
    aux = provider.aux_states()
    G = 0 if aux is None else aux.shape[0]
    if G and not spec.terminal.is_pointwise:
        raise InvalidArgumentError("grid-based providers need a pointwise terminal condition")
    X = forward.values
    times, steps = partition.times, partition.steps
    B_levels = None if noise.frozen else noise.B_levels()

    def states(i):
        return X[:, i] if not G else np.vstack([X[:, i], aux])

    Y = np.empty((M, n + 1))
    Z = np.zeros((M, n + 1, d))
    aY = np.empty((n + 1, G))
    aZ = np.zeros((n + 1, G, d))
    iters = np.zeros(n, dtype=int)
    Y[:, n] = spec.terminal(X)
    if G:
        aY[n] = spec.terminal.pointwise(aux)
    zeros_aux = np.zeros((G, d))

    for i in range(n, 0, -1):
        dt = steps[i - 1]
        y_all = np.concatenate([Y[:, i], aY[i]])
        x_i = states(i)
        x_prev = states(i - 1)
        dB_i = noise.dB[i - 1] if noise.frozen else noise.dB[:, i - 1]
        with np.errstate(over="ignore", invalid="ignore"):
            yt = y_all + backward_noise_term(coeffs, times[i], x_i, y_all, dB_i)
        dW = noise.dW[:, i - 1] if not G else np.vstack([noise.dW[:, i - 1], zeros_aux])
        req = CondExpRequest(
            step=i, t_prev=times[i - 1], dt=dt, ytilde=yt, dW=dW, states=x_prev,
            b_states=None if B_levels is None else B_levels[:, i - 1], n_samples=M,
        )
        z = z_update(provider, req, dt, ledger)
        try:
            e = provider.estimate(req)
        except BDSDEError as exc:
            raise exc.with_context(step=i)
        if ledger is not None:
            bound = ledger.R(i - 1, x_prev)
            e = np.clip(e, -bound, bound)
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                y, it = picard_solve(coeffs, times[i - 1], x_prev, e, z, dt, picard_tol, picard_max)
        except BDSDEError as exc:
            raise exc.with_context(step=i)
        if ledger is not None:
            bound = ledger.P(i - 1, x_prev)
            y = np.clip(y, -bound, bound)
        bad = ~(np.isfinite(y) & np.all(np.isfinite(z), axis=1))
        if np.any(bad):
            p = int(np.argmax(bad))
            raise NumericOverflowError("backward value is not finite", path=p, step=i)
        iters[i - 1] = it
        Y[:, i - 1], aY[i - 1] = y[:M], y[M:]
        Z[:, i - 1], aZ[i - 1] = z[:M], z[M:]

    if G:
        return BackwardGrid(Y, Z, iters, partition, aux, aY, aZ)
    return BackwardGrid(Y, Z, iters, partition)
