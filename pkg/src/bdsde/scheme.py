"""Pointwise pieces of one backward step, shared by every solver."""

from __future__ import annotations

import numpy as np

from .errors import MeshTooCoarseError, NoConvergenceError
from .problem import CoefficientSet

PICARD_TOL = 1e-12
PICARD_MAX = 50


def backward_noise_term(coeffs: CoefficientSet, t: float, x: np.ndarray, y: np.ndarray, dB) -> np.ndarray:
    """``g(t, x, y) . dB`` for a shared (ell,) or per-point (N, ell) increment."""
    dB = np.asarray(dB, float)
    ell = dB.shape[-1]
    g = coeffs.g(t, x, y, ell)
    if dB.ndim == 1:
        return g @ dB
    return np.sum(g * dB, axis=1)


def picard_solve(coeffs: CoefficientSet, t: float, x: np.ndarray, e: np.ndarray, z: np.ndarray,
                 dt: float, tol: float = PICARD_TOL, maxit: int = PICARD_MAX):
    """Solve ``y = e + f(t, x, y, z) dt`` pointwise by fixed-point iteration.

    Each point stops as soon as its own update is below
    ``tol * max(1, |y|)``, so a point's result never depends on the
    others.  Returns the solution and the largest iteration count.

    Raises:
        NoConvergenceError: if some point is still moving after ``maxit``
            iterations; ``path`` is the first such point.
    """
    e = np.asarray(e, float)
    y = e.copy()
    active = np.ones(y.shape[0], dtype=bool)
    iters = 0
    for k in range(maxit):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        new = e[idx] + coeffs.f(t, x[idx], y[idx], z[idx]) * dt
        moved = np.abs(new - y[idx])
        y[idx] = new
        active[idx[moved <= tol * np.maximum(1.0, np.abs(new))]] = False
        iters = k + 1
    if np.any(active):
        p = int(np.argmax(active))
        raise NoConvergenceError(f"Picard iteration did not converge in {maxit} steps").with_context(path=p)
    return y, iters


def check_contraction(K: float, dt: float) -> None:
    if K * dt >= 1:
        raise MeshTooCoarseError(f"K*dt = {K * dt:g} >= 1; the implicit step may not contract")
