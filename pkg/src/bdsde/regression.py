"""Least-squares regression estimator and the a priori bounds used to
truncate its output.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np

from .errors import InvalidArgumentError, InvalidInputError, MeshTooCoarseError
from .io import write_csv
from .problem import Partition

POLYNOMIAL = "polynomial"
BINS = "bins"


@dataclass(frozen=True)
class RegressionSpec:
    """Regression design.

    Attributes:
        basis: ``"polynomial"`` (total-degree monomials) or ``"bins"``
            (piecewise constant on equal-width cells).
        degree: polynomial degree.
        bins: cells per regressor dimension for the bin basis.
        regressors: ``"x"`` or ``"x-b"`` (state paired with ``B_t``).
        ridge: shrinkage weight; the objective is
            ``mean((A beta - y)^2) + ridge * |beta|^2`` with the intercept
            left unpenalised.
    """

    basis: str = POLYNOMIAL
    degree: int = 3
    bins: int = 10
    regressors: str = "x"
    ridge: float = 0.0

    def __post_init__(self):
        if self.basis not in (POLYNOMIAL, BINS):
            raise InvalidArgumentError(f"unknown basis {self.basis!r}")
        if self.degree < 0:
            raise InvalidArgumentError("degree must be >= 0")
        if self.bins < 1:
            raise InvalidArgumentError("bin count must be >= 1")
        if self.regressors not in ("x", "x-b"):
            raise InvalidArgumentError(f"unknown regressor choice {self.regressors!r}")
        if not self.ridge >= 0:
            raise InvalidArgumentError("ridge must be >= 0")


def monomial_exponents(k: int, degree: int) -> np.ndarray:
    """Exponent rows of all monomials in ``k`` variables up to ``degree``."""
    rows = []
    for p in range(degree + 1):
        for combo in combinations_with_replacement(range(k), p):
            e = np.zeros(k, dtype=int)
            for v in combo:
                e[v] += 1
            rows.append(e)
    return np.array(rows, dtype=int).reshape(-1, k)


def _check_finite(arr: np.ndarray, what: str) -> None:
    bad = ~np.isfinite(arr)
    if bad.ndim > 1:
        bad = bad.any(axis=tuple(range(1, bad.ndim)))
    if np.any(bad):
        idx = int(np.argmax(bad))
        raise InvalidInputError(f"non-finite {what} at index {idx}", index=idx)


@dataclass
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        tiny = 1e-12 * np.maximum(1.0, np.abs(mean))
        scale = np.where(scale > tiny, scale, 1.0)
        return cls(mean, scale)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.scale


def design_matrix(Z: np.ndarray, degree: int) -> np.ndarray:
    """Monomials of the (already standardised) regressors ``Z``."""
    exps = monomial_exponents(Z.shape[1], degree)
    A = np.ones((Z.shape[0], exps.shape[0]))
    for j, e in enumerate(exps):
        for v, p in enumerate(e):
            if p:
                A[:, j] *= Z[:, v] ** p
    return A


@dataclass
class FittedRegression:
    spec: RegressionSpec
    scaler: Standardizer
    coef: np.ndarray | None = None
    edges: list | None = None
    cell_means: np.ndarray | None = None
    fallback: float = 0.0

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, float).reshape(np.shape(X)[0], -1)
        Z = self.scaler(X)
        if self.spec.basis == POLYNOMIAL:
            A = design_matrix(Z, self.spec.degree)
            return A @ self.coef
        return self.cell_means[_cell_index(Z, self.edges, self.spec.bins)]


def _cell_index(Z, edges, nb) -> np.ndarray:
    idx = np.zeros(Z.shape[0], dtype=np.int64)
    for v in range(Z.shape[1]):
        k = np.clip(np.searchsorted(edges[v], Z[:, v], side="right") - 1, 0, nb - 1)
        idx = idx * nb + k
    return idx


def fit_regression(targets, regressors, spec: RegressionSpec) -> FittedRegression:
    """Fit the basis expansion by least squares.

    Rank-deficient designs get the minimal-norm coefficient vector.

    Raises:
        InvalidInputError: if a target or regressor is not finite; ``index``
            is the first offending sample.
    """
    y = np.asarray(targets, float).reshape(-1)
    X = np.asarray(regressors, float).reshape(y.size, -1)
    _check_finite(y, "target")
    _check_finite(X, "regressor")
    if y.size == 0:
        raise InvalidArgumentError("no samples to fit")
    scaler = Standardizer.fit(X)
    Z = scaler(X)
    if spec.basis == POLYNOMIAL:
        A = design_matrix(Z, spec.degree)
        if spec.ridge > 0:
            k = A.shape[1]
            pen = np.sqrt(spec.ridge * y.size) * np.eye(k)[1:]
            A_aug = np.vstack([A, pen])
            y_aug = np.concatenate([y, np.zeros(k - 1)])
            coef = np.linalg.lstsq(A_aug, y_aug, rcond=None)[0]
        else:
            coef = np.linalg.lstsq(A, y, rcond=None)[0]
        return FittedRegression(spec, scaler, coef=coef)
    nb = spec.bins
    edges = [np.linspace(Z[:, v].min(), Z[:, v].max(), nb + 1) for v in range(Z.shape[1])]
    cells = _cell_index(Z, edges, nb)
    ncell = nb ** Z.shape[1]
    sums = np.bincount(cells, weights=y, minlength=ncell)
    counts = np.bincount(cells, minlength=ncell).astype(float)
    overall = float(y.mean())
    shrink = spec.ridge * y.size
    with np.errstate(invalid="ignore", divide="ignore"):
        means = (sums + shrink * overall) / (counts + shrink)
    means = np.where(counts + shrink > 0, means, overall)
    return FittedRegression(spec, scaler, edges=edges, cell_means=means, fallback=overall)


def lsmc_fit(targets, regressors, spec: RegressionSpec, predict_at=None) -> np.ndarray:
    """Projection of ``targets`` on the basis, evaluated at the regressors
    (or at ``predict_at`` when given)."""
    model = fit_regression(targets, regressors, spec)
    at = regressors if predict_at is None else predict_at
    return model.predict(at)


# --- a priori bounds -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TruncationLedger:
    """Coefficients ``c_i`` (constant) and ``q_i`` (quadratic) with
    ``|Y_i| <= c_i + q_i |x|^2``, plus the clamp bands for the two
    conditional expectations.

    Arrays are indexed by step ``i = 0..n`` along the last axis; a leading
    path axis appears when the backward noise is drawn per path.  ``rq, rc,
    jq, jc`` have length ``n`` and hold the bands used when conditioning at
    ``t_i`` (they involve ``|dB_{i+1}|``).
    """

    times: np.ndarray
    C: float
    c: np.ndarray
    q: np.ndarray
    rq: np.ndarray
    rc: np.ndarray
    jq: np.ndarray
    jc: np.ndarray

    @property
    def n(self) -> int:
        return self.times.size - 1

    @staticmethod
    def _sq(x) -> np.ndarray:
        x = np.asarray(x, float)
        return np.sum(x.reshape(x.shape[0], -1) ** 2, axis=1) if x.ndim > 1 else x**2

    def _rows(self, arr, i, m):
        col = arr[..., i]
        if np.ndim(col) == 0:
            return float(col)
        return col if col.shape[0] == m else np.broadcast_to(col, (m,))

    def P(self, i: int, x) -> np.ndarray:
        s = self._sq(x)
        return self._rows(self.c, i, s.size) + self._rows(self.q, i, s.size) * s

    def R(self, i: int, x) -> np.ndarray:
        s = self._sq(x)
        return self._rows(self.rc, i, s.size) + self._rows(self.rq, i, s.size) * s

    def J(self, i: int, x) -> np.ndarray:
        s = self._sq(x)
        return self._rows(self.jc, i, s.size) + self._rows(self.jq, i, s.size) * s

    def to_csv(self, path) -> None:
        if self.c.ndim == 1:
            rows = ([i, self.times[i], self.c[i], self.q[i]] for i in range(self.n + 1))
            write_csv(path, ["step", "t", "c_i", "q_i"], rows)
        else:
            rows = ([i, self.times[i], self.c[p, i], self.q[p, i], p]
                    for p in range(self.c.shape[0]) for i in range(self.n + 1))
            write_csv(path, ["step", "t", "c_i", "q_i", "path_id"], rows)


def truncation_ledger(partition: Partition, dB, C: float) -> TruncationLedger:
    """Backward recursion for the bound coefficients.

    ``dB`` is (n, ell) for one backward-noise path or (M, n, ell) per path.

    Raises:
        InvalidArgumentError: if ``C <= 0`` or ``dB`` does not fit.
        MeshTooCoarseError: if ``C * |pi| >= 1``.
    """
    if not C > 0:
        raise InvalidArgumentError("C must be positive")
    mesh = partition.mesh
    if C * mesh >= 1:
        raise MeshTooCoarseError(f"C*|pi| = {C * mesh:g} >= 1")
    dB = np.asarray(dB, float)
    if dB.ndim == 1:
        dB = dB[:, None]
    if dB.shape[-2] != partition.n:
        raise InvalidArgumentError("dB does not match the partition")
    a = np.linalg.norm(dB, axis=-1)  # a[..., i] = |dB_{i+1}|
    n = partition.n
    lead = a.shape[:-1]
    c = np.empty(lead + (n + 1,))
    q = np.empty(lead + (n + 1,))
    rq = np.empty(lead + (n,))
    rc = np.empty(lead + (n,))
    jq = np.empty(lead + (n,))
    jc = np.empty(lead + (n,))
    D = np.sqrt(1 + C * C * mesh) / (1 - C * mesh)
    sp = np.sqrt(mesh)
    c[..., n] = 2 * C
    q[..., n] = C
    for i in range(n - 1, -1, -1):
        ai = a[..., i]
        quad = (1 + 2 * C * mesh) * ((1 + C * ai) * q[..., i + 1] + C * ai)
        extra = 6 * C * C * mesh * (1 + 2 * C * ai)
        rq[..., i] = quad
        rc[..., i] = (1 + C * ai) * c[..., i + 1] + extra
        jq[..., i] = sp * quad
        jc[..., i] = sp * (1 + C * ai) * c[..., i + 1] + extra
        q[..., i] = D * (quad + C * mesh)
        c[..., i] = D * (rc[..., i] + 3 * C * mesh)
    return TruncationLedger(partition.times, float(C), c, q, rq, rc, jq, jc)


_BANDS = {"P": "P", "R": "R", "J": "J"}


def truncate(value, kind: str, i: int, x, ledger: TruncationLedger) -> np.ndarray:
    """Clamp ``value`` to ``[-bound, bound]`` with the ``kind`` band at step ``i``."""
    if kind not in _BANDS:
        raise InvalidArgumentError(f"unknown band {kind!r}")
    bound = getattr(ledger, kind)(i, x)
    return np.clip(value, -bound, bound)
