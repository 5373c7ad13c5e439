"""Univariate goodness-of-fit: time rescaling, K-S, Q-Q, raw and Pearson residuals."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .core import EventSequence, counting_process
from .errors import OutOfRangeError, ValidationError
from .models.params import LatentPath
from .models.piecewise import check_event_intensities, piecewise_intensity
from .smoothing import lowess

__all__ = [
    "RescaledTimes",
    "QqData",
    "ResidualPair",
    "rescaled_times",
    "ks_statistic",
    "ks_pvalue",
    "ks_critical_value",
    "qq_data",
    "raw_residual",
    "pearson_residual",
    "residuals",
    "residual_trajectory",
    "lowess",
    "PEARSON_TOLERANCE",
]

PEARSON_TOLERANCE = 1e-6


@dataclass(frozen=True)
class RescaledTimes:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if np.any(v < 0):
            raise ValidationError("rescaled times must be non-negative")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return int(self.values.size)


@dataclass(frozen=True)
class QqData:
    """Rows of (theoretical Exp(1) quantile, empirical quantile)."""

    points: np.ndarray

    @property
    def theoretical(self):
        return self.points[:, 0]

    @property
    def empirical(self):
        return self.points[:, 1]


@dataclass(frozen=True)
class ResidualPair:
    raw: float
    pearson: float


def rescaled_times(model, seq: EventSequence, path: LatentPath | None = None) -> RescaledTimes:
    """Compensator increments between consecutive events (t_0 = 0)."""
    pw = piecewise_intensity(model, seq, path)
    at_events = pw.cumulative()[pw.event_cells + 1]
    return RescaledTimes(np.diff(at_events, prepend=0.0))


def ks_statistic(rescaled) -> float:
    """sup |F_n(x) - (1 - exp(-x))| evaluated at the order statistics."""
    x = np.sort(np.asarray(getattr(rescaled, "values", rescaled), dtype=float))
    n = x.size
    if n == 0:
        raise ValidationError("K-S statistic is undefined for an empty sample")
    cdf = -np.expm1(-x)
    i = np.arange(1, n + 1)
    d = max(float(np.max(i / n - cdf)), float(np.max(cdf - (i - 1) / n)))
    return min(max(d, 0.0), 1.0)


def ks_pvalue(rescaled) -> float:
    """Exact one-sample K-S p-value against Exp(1), parameters treated as known."""
    n = len(getattr(rescaled, "values", rescaled))
    return float(stats.kstwo.sf(ks_statistic(rescaled), n))


def ks_critical_value(n: int, level: float = 0.01) -> float:
    return float(stats.kstwo.isf(level, n))


def qq_data(rescaled) -> QqData:
    """Exp(1) quantiles at plotting positions (i - 0.5)/n against sorted values."""
    x = np.sort(np.asarray(getattr(rescaled, "values", rescaled), dtype=float))
    n = x.size
    if n == 0:
        raise ValidationError("Q-Q data needs at least one value")
    theo = -np.log1p(-(np.arange(1, n + 1) - 0.5) / n)
    return QqData(np.column_stack([theo, x]))


def _check_t(seq, t):
    if t is None:
        return seq.horizon
    t = float(t)
    if not (0.0 <= t <= seq.horizon):
        raise OutOfRangeError(f"t={t!r} outside [0, {seq.horizon!r}]")
    return t


def raw_residual(model, seq: EventSequence, path: LatentPath | None = None, t: float | None = None) -> float:
    """N(t) minus the fitted compensator at t (default t = T)."""
    t = _check_t(seq, t)
    return counting_process(seq, t) - piecewise_intensity(model, seq, path).integral(t)


def pearson_residual(
    model, seq: EventSequence, path: LatentPath | None = None, t: float | None = None,
    tol: float = PEARSON_TOLERANCE,
) -> float:
    """Sum of 1/sqrt(intensity) over events in (0, t] minus the integral of sqrt(intensity).

    The integral is adaptive Simpson to absolute tolerance ``tol``, split at
    every event and latent transition.
    """
    t = _check_t(seq, t)
    pw = piecewise_intensity(model, seq, path)
    n = counting_process(seq, t)
    lam = pw.event_intensities()[:n]
    check_event_intensities(lam)
    return float(np.sum(1.0 / np.sqrt(lam))) - pw.sqrt_integral(t, tol)


def residuals(model, seq: EventSequence, path: LatentPath | None = None, t: float | None = None) -> ResidualPair:
    raw = raw_residual(model, seq, path, t)
    pearson = pearson_residual(model, seq, path, t)
    if not (math.isfinite(raw) and math.isfinite(pearson)):
        raise ValidationError("non-finite residual")
    return ResidualPair(raw, pearson)


def residual_trajectory(model, seq: EventSequence, path: LatentPath | None = None, tol: float = PEARSON_TOLERANCE):
    """Raw and Pearson residuals evaluated at every event time.

    Returns ``(counts, raw, pearson)`` where ``counts[m] = m + 1`` is N(t_m).
    """
    pw = piecewise_intensity(model, seq, path)
    lam = pw.event_intensities()
    check_event_intensities(lam)
    at = pw.event_cells + 1
    counts = np.arange(1, len(seq) + 1)
    raw = counts - pw.cumulative()[at]
    root = np.concatenate([[0.0], np.cumsum(pw.sqrt_cell_integrals(tol))])
    pearson = np.cumsum(1.0 / np.sqrt(lam)) - root[at]
    return counts, raw, pearson
