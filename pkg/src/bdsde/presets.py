"""Built-in one-dimensional test problems with closed-form discrete solutions.

The closed forms describe the discrete scheme itself (frozen backward
noise), not the continuous solution, so a sweep with an exact conditional
expectation must reproduce them up to interpolation error.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidArgumentError
from .problem import CoefficientSet, Partition, ProblemSpec, TerminalCondition

G0 = 0.5  # additive backward coefficient of "linear-g0"
QUAD_G = 0.3  # multiplicative backward coefficient of "quad"
GY_A, GY_B = -0.5, 0.3  # f = a y, g = b y in "linear-gy"
GEO_MU, GEO_SIG = 0.1, 0.2


def _zero(t, x, *rest):
    return np.zeros(x.shape[0])


def _one(t, x):
    return np.ones_like(x)


def _drift0(t, x):
    return np.zeros_like(x)


@dataclass(frozen=True)
class Preset:
    """A named problem.

    ``y_discrete(partition, X, dB)`` and ``z_discrete`` return the exact
    scheme values (M, n + 1) and (M, n + 1, 1) for forward paths ``X``
    (M, n + 1, 1) and one frozen increment sequence ``dB`` (n, 1).
    ``z_continuous(t, x)`` is the continuous-time Z where it is a
    deterministic function of the state.
    """

    name: str
    description: str
    build: Callable[..., ProblemSpec]
    y_discrete: Callable | None = None
    z_discrete: Callable | None = None
    z_continuous: Callable | None = None

    @property
    def reference(self) -> str:
        return "closed-form" if self.y_discrete is not None else "quadrature"

    def spec(self, T: float = 1.0) -> ProblemSpec:
        return self.build(T)


def _spec(drift, diffusion, driver, bdriver, K, h, T, x0=0.0):
    coeffs = CoefficientSet(drift, diffusion, driver, bdriver, K)
    return ProblemSpec(coeffs, TerminalCondition(h=h), d=1, ell=1, T=T, x0=np.array([x0]))


def _with_terminal_zero(z):
    z[:, -1] = 0.0
    return z


def _const_z(value):
    def z(part, X, dB):
        return _with_terminal_zero(np.full(X.shape, float(value)))
    return z


def _tail_sums(dB):
    """``S[i] = sum_{j > i} dB_j`` for i = 0..n (increment j is dB[j - 1])."""
    s = np.concatenate([np.cumsum(dB[::-1, 0])[::-1], [0.0]])
    return s


def _scaled_products(part: Partition, dB, growth):
    """Coefficients ``a_i`` with ``a_n = 1`` and ``a_{i-1} = a_i growth(i)``."""
    n = part.n
    a = np.empty(n + 1)
    a[n] = 1.0
    for i in range(n, 0, -1):
        a[i - 1] = a[i] * growth(i, part.steps[i - 1], dB[i - 1, 0])
    return a


# --- constant -----------------------------------------------------------------

def _constant(T):
    return _spec(_drift0, _one, _zero, _zero, 1.0, lambda x: np.ones(x.shape[0]), T)


# --- martingale ---------------------------------------------------------------

def _martingale(T):
    return _spec(_drift0, _one, _zero, _zero, 1.0, lambda x: x[:, 0], T)


# --- linear-g0 ----------------------------------------------------------------

def _linear_g0(T):
    return _spec(_drift0, _one, _zero, lambda t, x, y: np.full(x.shape[0], G0), 1.0 + G0,
                 lambda x: x[:, 0], T)


def _linear_g0_y(part, X, dB):
    return X[:, :, 0] + G0 * _tail_sums(dB)[None, :]


# --- heat-quad ----------------------------------------------------------------

def _heat_quad(T):
    return _spec(_drift0, _one, _zero, _zero, 1.0, lambda x: x[:, 0] ** 2, T)


def _heat_quad_y(part, X, dB):
    return X[:, :, 0] ** 2 + (part.T - part.times)[None, :]


def _heat_quad_z(part, X, dB):
    return _with_terminal_zero(2.0 * X.copy())


# --- quad -----------------------------------------------------------------------

def _quad(T):
    return _spec(_drift0, _one, lambda t, x, y, z: -y, lambda t, x, y: QUAD_G * y, 1.0,
                 lambda x: x[:, 0] ** 2, T)


def _quad_a(part, dB):
    return _scaled_products(part, dB, lambda i, dt, db: (1 + QUAD_G * db) / (1 + dt))


def _quad_y(part, X, dB):
    a = _quad_a(part, dB)
    return a[None, :] * (X[:, :, 0] ** 2 + (part.T - part.times)[None, :])


def _quad_z(part, X, dB):
    a = _quad_a(part, dB)
    fac = np.append(a[1:] * (1 + QUAD_G * dB[:, 0]), 0.0)  # Z_{i-1} uses a_i (1 + g dB_i)
    return 2.0 * X * fac[None, :, None]


# --- linear-gy ------------------------------------------------------------------

def _linear_gy(T):
    return _spec(_drift0, _one, lambda t, x, y, z: GY_A * y, lambda t, x, y: GY_B * y, 1.0,
                 lambda x: x[:, 0], T)


def _gy_a(part, dB):
    return _scaled_products(part, dB, lambda i, dt, db: (1 + GY_B * db) / (1 - GY_A * dt))


def _linear_gy_y(part, X, dB):
    return _gy_a(part, dB)[None, :] * X[:, :, 0]


def _linear_gy_z(part, X, dB):
    a = _gy_a(part, dB)
    fac = np.append(a[1:] * (1 + GY_B * dB[:, 0]), 0.0)
    return np.broadcast_to(fac[None, :, None], X.shape).copy()


# --- geometric ------------------------------------------------------------------

def _geometric(T):
    return _spec(lambda t, x: GEO_MU * x, lambda t, x: GEO_SIG * x, _zero, _zero, 1.0,
                 lambda x: x[:, 0], T, x0=1.0)


def _geo_a(part, dB):
    return _scaled_products(part, dB, lambda i, dt, db: 1 + GEO_MU * dt)


def _geometric_y(part, X, dB):
    return _geo_a(part, dB)[None, :] * X[:, :, 0]


def _geometric_z(part, X, dB):
    a = _geo_a(part, dB)
    fac = np.append(a[1:], 0.0)  # Z_{i-1} = sigma x a_i
    return GEO_SIG * X * fac[None, :, None]


PRESETS = {
    p.name: p
    for p in [
        Preset("constant", "f = g = 0, h = 1", _constant,
               lambda part, X, dB: np.ones(X.shape[:2]), _const_z(0.0), lambda t, x: np.zeros_like(x)),
        Preset("martingale", "f = g = 0, h(x) = x", _martingale,
               lambda part, X, dB: X[:, :, 0].copy(), _const_z(1.0), lambda t, x: np.ones_like(x)),
        Preset("linear-g0", "f = 0, g = 0.5, h(x) = x", _linear_g0, _linear_g0_y, _const_z(1.0),
               lambda t, x: np.ones_like(x)),
        Preset("heat-quad", "f = g = 0, h(x) = x^2", _heat_quad, _heat_quad_y, _heat_quad_z,
               lambda t, x: 2.0 * x),
        Preset("quad", "f = -y, g = 0.3 y, h(x) = x^2", _quad, _quad_y, _quad_z),
        Preset("linear-gy", "f = -0.5 y, g = 0.3 y, h(x) = x", _linear_gy, _linear_gy_y, _linear_gy_z),
        Preset("geometric", "b = 0.1 x, sigma = 0.2 x, x0 = 1, h(x) = x", _geometric,
               _geometric_y, _geometric_z),
    ]
}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise InvalidArgumentError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None
