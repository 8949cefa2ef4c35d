"""Log-log slope fits and small summary helpers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    half_width: float  # 95% confidence half-width of the slope

    def within(self, lo: float, hi: float) -> bool:
        return lo <= self.slope <= hi


def fit_slope(x, y, level: float = 0.95) -> SlopeFit:
    """Least-squares fit of ``log y = a + s log x``."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    res = stats.linregress(lx, ly)
    dof = lx.size - 2
    hw = float(stats.t.ppf(0.5 + level / 2, dof) * res.stderr) if dof > 0 else float("nan")
    return SlopeFit(float(res.slope), float(res.intercept), hw)


def mean_se(samples, axis=0):
    """Sample mean and its standard error along ``axis``."""
    a = np.asarray(samples, float)
    n = a.shape[axis]
    m = a.mean(axis=axis)
    se = a.std(axis=axis, ddof=1) / np.sqrt(n) if n > 1 else np.zeros_like(m)
    return m, se
