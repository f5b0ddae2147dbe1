"""Least-squares slopes on log-log data."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    stderr: float
    intercept: float
    npoints: int

    def to_dict(self):
        return asdict(self)


def loglog_slope(x, y):
    """OLS fit of ``log y`` against ``log x``.

    Points with ``y == 0`` cannot be placed on the log scale and raise
    ``ValueError``; callers decide what exact zeros mean.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 3:
        raise ValueError("need at least three matching points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs strictly positive data")
    res = stats.linregress(np.log(x), np.log(y))
    stderr = float(res.stderr) if math.isfinite(res.stderr) else 0.0
    return SlopeFit(float(res.slope), stderr, float(res.intercept), int(x.size))
