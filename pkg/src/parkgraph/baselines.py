"""Least-squares AR(p) and seasonal-naive forecasters.

These are simplified stand-ins for ARIMA/SARIMA: no differencing, no MA
terms, no maximum-likelihood estimation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import STEPS_PER_DAY, STEPS_PER_WEEK


@dataclass(frozen=True)
class ArModel:
    coefficients: np.ndarray  # lag 1 first
    intercept: float

    @property
    def order(self) -> int:
        return len(self.coefficients)


def ar_fit(series, p: int) -> ArModel:
    """Ordinary least squares of ``x_t`` on ``(x_{t-1}, ..., x_{t-p}, 1)``."""
    x = np.asarray(series, dtype=np.float64)
    if p < 1:
        raise ValueError(f"lag order must be >= 1, got {p}")
    if len(x) <= p + 1:
        raise ValueError(f"series of length {len(x)} is too short for AR({p})")
    rows = len(x) - p
    design = np.ones((rows, p + 1))
    for lag in range(1, p + 1):
        design[:, lag - 1] = x[p - lag : len(x) - lag]
    target = x[p:]
    if np.linalg.matrix_rank(design) < p + 1:
        # a constant series still has an exact fit: intercept only
        if np.ptp(x) == 0:
            return ArModel(np.zeros(p), float(x[0]))
        raise np.linalg.LinAlgError(f"AR({p}) design matrix is singular; try a smaller lag order")
    sol, *_ = np.linalg.lstsq(design, target, rcond=None)
    return ArModel(sol[:p], float(sol[p]))


def ar_forecast(model: ArModel, history, steps: int) -> np.ndarray:
    """Iterate the fitted recursion ``steps`` times past the end of ``history``."""
    hist = list(np.asarray(history, dtype=np.float64))
    if len(hist) < model.order:
        raise ValueError(f"AR({model.order}) needs {model.order} history values, got {len(hist)}")
    out = []
    for _ in range(steps):
        nxt = model.intercept + sum(c * hist[-1 - i] for i, c in enumerate(model.coefficients))
        hist.append(nxt)
        out.append(nxt)
    return np.array(out)


def seasonal_naive(history, steps: int, period: int = STEPS_PER_DAY) -> np.ndarray:
    """Repeat the value observed one period before each forecast step."""
    hist = np.asarray(history, dtype=np.float64)
    if len(hist) < period:
        raise ValueError(f"seasonal-naive with period {period} needs that much history, got {len(hist)}")
    if steps > period:
        raise ValueError(f"horizon {steps} exceeds the period {period}")
    return hist[len(hist) - period : len(hist) - period + steps]


BASELINES = {
    "ar4": None,
    "seasonal_day": STEPS_PER_DAY,
    "seasonal_week": STEPS_PER_WEEK,
}
