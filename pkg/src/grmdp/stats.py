"""Trial aggregation: t-intervals and log-log power-law fits."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats


class FitError(ValueError):
    """Raised when a log-log fit has fewer than two usable points."""


def mean_ci(values, level: float = 0.95) -> tuple[float, float]:
    """Sample mean and t-interval half-width; a single value has half-width 0."""
    x = np.asarray(values, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("mean_ci needs at least one value")
    mean = float(x.mean())
    if x.size == 1:
        return mean, 0.0
    q = stats.t.ppf(0.5 + level / 2, x.size - 1)
    return mean, float(q * x.std(ddof=1) / np.sqrt(x.size))


@dataclass(frozen=True)
class FitResult:
    slope: float
    half_width: float
    intercept: float
    r2: float
    n: int

    def to_dict(self) -> dict:
        return asdict(self)


def loglog_fit(N, y, level: float = 0.95) -> FitResult:
    """OLS of ``ln y`` on ``ln N`` with a t-based slope interval (n - 2 df).

    With exactly two points the interval is undefined and reported as 0. A
    constant response gives slope 0 and, by convention, ``R^2 = 0``.
    """
    x = np.log(np.asarray(N, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    if x.size != ly.size:
        raise FitError("N and y differ in length")
    if x.size < 2 or np.unique(x).size < 2:
        raise FitError(f"need at least 2 distinct N, got {np.unique(x).size}")
    xc = x - x.mean()
    yc = ly - ly.mean()
    sxx = float(xc @ xc)
    syy = float(yc @ yc)
    slope = float(xc @ yc) / sxx
    intercept = float(ly.mean() - slope * x.mean())
    n = x.size
    resid = yc - slope * xc
    sse = float(resid @ resid)
    r2 = 0.0 if syy == 0 else min(1.0, max(0.0, 1.0 - sse / syy))
    if n > 2:
        se = np.sqrt(sse / (n - 2) / sxx)
        half = float(stats.t.ppf(0.5 + level / 2, n - 2) * se)
    else:
        half = 0.0
    return FitResult(slope, half, intercept, r2, n)
