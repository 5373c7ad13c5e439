"""Cleveland's robust locally weighted linear regression (LOWESS)."""

from __future__ import annotations

import math

import numpy as np

from .errors import ValidationError

__all__ = ["lowess"]


def _tricube(u):
    u = np.clip(np.abs(u), 0.0, 1.0)
    return (1.0 - u**3) ** 3


def _local_fit(x, y, weights, x0):
    sw = weights.sum()
    if sw <= 0:
        return float("nan")
    xm = weights @ x / sw
    ym = weights @ y / sw
    sxx = weights @ (x - xm) ** 2
    if sxx <= 1e-12 * max(1.0, xm * xm) * sw:
        return float(ym)
    slope = weights @ ((x - xm) * (y - ym)) / sxx
    return float(ym + slope * (x0 - xm))


def lowess(x, y, span: float = 2.0 / 3.0, iterations: int = 3) -> np.ndarray:
    """Robust LOWESS smoother.

    Parameters
    ----------
    x, y : array_like
        Equal-length samples, at least 3 points.
    span : float
        Fraction of points in each local neighbourhood, ``0 < span <= 1``.
    iterations : int
        Number of bisquare robustness passes after the initial fit.

    Returns
    -------
    ndarray, shape (n, 2)
        Columns ``(x, fitted)`` sorted by ``x``.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise ValidationError("x and y must have equal length")
    n = x.size
    if n < 3:
        raise ValidationError("LOWESS needs at least 3 points")
    if not 0 < span <= 1:
        raise ValidationError(f"span must lie in (0, 1], got {span}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValidationError("LOWESS inputs must be finite")
    if np.ptp(x) == 0:
        raise ValidationError("LOWESS is undefined when all x values are equal")

    order = np.argsort(x, kind="stable")
    x, y = x[order], y[order]
    r = min(n, max(2, math.ceil(span * n)))

    dist = np.abs(x[:, None] - x[None, :])
    h = np.sort(dist, axis=1)[:, r - 1]
    local = np.empty((n, n))
    for i in range(n):
        if h[i] > 0:
            local[i] = _tricube(dist[i] / h[i])
        else:
            local[i] = (dist[i] == 0).astype(float)

    robust = np.ones(n)
    fitted = np.empty(n)
    for it in range(iterations + 1):
        for i in range(n):
            fitted[i] = _local_fit(x, y, local[i] * robust, x[i])
            if math.isnan(fitted[i]):  # every neighbour rejected as an outlier
                fitted[i] = _local_fit(x, y, local[i], x[i])
        if it == iterations:
            break
        resid = y - fitted
        s = np.median(np.abs(resid))
        if s <= 0:
            break
        u = resid / (6.0 * s)
        robust = np.where(np.abs(u) < 1.0, (1.0 - u**2) ** 2, 0.0)
    return np.column_stack([x, fitted])
