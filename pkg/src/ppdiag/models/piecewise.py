"""Intensity of a model along one realisation, as a piecewise exp-decay function.

On every cell ``(e_k, e_{k+1}]`` between consecutive breakpoints (events,
latent transitions, 0 and T) the plugged-in intensity is
``base_k + amp_k * exp(-beta * (u - e_k))``. That shape covers all four
models and gives closed-form compensators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..core import EventSequence
from ..errors import OutOfRangeError, UsageError, ZeroIntensityError
from ..quadrature import adaptive_simpson
from . import _kernels
from .params import HawkesParams, LatentPath, MmhpParams, MmppParams, PoissonParams, is_modulated

__all__ = ["PiecewiseIntensity", "piecewise_intensity", "compensator", "intensity_path"]


@dataclass(frozen=True)
class PiecewiseIntensity:
    edges: np.ndarray
    base: np.ndarray
    amp: np.ndarray
    beta: float
    event_cells: np.ndarray  # cell index ending at each event

    @property
    def horizon(self) -> float:
        return float(self.edges[-1])

    def _cell(self, t):
        k = np.searchsorted(self.edges, t, side="left") - 1
        return np.clip(k, 0, self.base.size - 1)

    def value(self, t):
        t = np.asarray(t, dtype=float)
        k = self._cell(t)
        out = self.base[k] + self.amp[k] * np.exp(-self.beta * (t - self.edges[k]))
        return float(out) if out.ndim == 0 else out

    def cell_integrals(self) -> np.ndarray:
        lengths = np.diff(self.edges)
        if self.beta > 0:
            decay = -np.expm1(-self.beta * lengths) / self.beta
        else:
            decay = lengths
        return self.base * lengths + self.amp * decay

    def cumulative(self) -> np.ndarray:
        """Compensator at every edge."""
        return np.concatenate([[0.0], np.cumsum(self.cell_integrals())])

    def integral(self, t: float) -> float:
        if t <= 0:
            return 0.0
        k = int(self._cell(t))
        length = t - self.edges[k]
        partial = self.base[k] * length
        if self.amp[k] != 0:
            partial += self.amp[k] * -math.expm1(-self.beta * length) / self.beta
        return float(self.cumulative()[k] + partial)

    def event_intensities(self) -> np.ndarray:
        k = self.event_cells
        lengths = self.edges[k + 1] - self.edges[k]
        return self.base[k] + self.amp[k] * np.exp(-self.beta * lengths)

    def _sqrt_cell(self, k: int, a: float, b: float, tol: float) -> float:
        beta = self.beta
        base, amp, e = float(self.base[k]), float(self.amp[k]), float(self.edges[k])
        if amp == 0.0:
            return math.sqrt(max(base, 0.0)) * (b - a)

        def f(u):
            return math.sqrt(max(base + amp * math.exp(-beta * (u - e)), 0.0))

        return adaptive_simpson(f, a, b, tol)

    def sqrt_integral(self, t: float, tol: float = 1e-6) -> float:
        """Integral of sqrt(intensity) on [0, t] by adaptive Simpson, cell by cell.

        The absolute tolerance is shared across cells in proportion to length.
        """
        if t <= 0:
            return 0.0
        total = 0.0
        for k in range(int(self._cell(t)) + 1):
            a = float(self.edges[k])
            b = min(float(self.edges[k + 1]), t)
            if b > a:
                total += self._sqrt_cell(k, a, b, tol * (b - a) / t)
        return total

    def sqrt_cell_integrals(self, tol: float = 1e-6) -> np.ndarray:
        """Per-cell integrals of sqrt(intensity); their sum is within ``tol`` of the total."""
        T = self.horizon
        return np.array([
            self._sqrt_cell(k, float(a), float(b), tol * (b - a) / T)
            for k, (a, b) in enumerate(zip(self.edges[:-1], self.edges[1:]))
        ])


def piecewise_intensity(model, seq: EventSequence, path: LatentPath | None = None) -> PiecewiseIntensity:
    """Plug ``seq`` (and ``path`` for modulated models) into ``model``."""
    modulated = is_modulated(model)
    if modulated and path is None:
        raise UsageError(f"{model.kind} intensity needs a latent path")
    if not modulated and path is not None:
        raise UsageError(f"{model.kind} has no latent path")
    if path is not None and path.horizon != seq.horizon:
        raise UsageError("latent path and sequence horizons differ")
    T = seq.horizon
    cuts = [np.array([0.0, T]), seq.times]
    if path is not None:
        cuts.append(path.transition_times)
    edges = np.unique(np.concatenate(cuts))
    n_cells = edges.size - 1
    event_cells = np.searchsorted(edges, seq.times) - 1

    if isinstance(model, PoissonParams):
        return PiecewiseIntensity(edges, np.full(n_cells, model.lam), np.zeros(n_cells), 0.0, event_cells)
    if isinstance(model, MmppParams):
        z = path.state_at(edges[1:])
        base = np.where(z == 1, model.lam1, model.lam0).astype(float)
        return PiecewiseIntensity(edges, base, np.zeros(n_cells), 0.0, event_cells)

    is_event = np.zeros(edges.size, dtype=np.bool_)
    is_event[event_cells + 1] = True
    excite = _kernels.edge_excitation(edges, is_event, model.beta)[:-1]
    if isinstance(model, HawkesParams):
        return PiecewiseIntensity(edges, np.full(n_cells, model.lam1), model.alpha * excite, model.beta, event_cells)
    if isinstance(model, MmhpParams):
        active = path.state_at(edges[1:]) == 1
        base = np.where(active, model.lam1, model.lam0).astype(float)
        amp = np.where(active, model.alpha * excite, 0.0)
        return PiecewiseIntensity(edges, base, amp, model.beta, event_cells)
    raise UsageError(f"unknown model type {type(model).__name__}")


def compensator(model, seq: EventSequence, path: LatentPath | None, t: float) -> float:
    """Integral of the plugged-in intensity over [0, t]."""
    if not (0.0 <= t <= seq.horizon):
        raise OutOfRangeError(f"t={t!r} outside [0, {seq.horizon!r}]")
    return piecewise_intensity(model, seq, path).integral(t)


def intensity_path(model, seq: EventSequence, path: LatentPath | None, grid) -> np.ndarray:
    """Model intensity on ``grid`` with ``path`` standing in for the latent chain."""
    grid = np.asarray(grid, dtype=float)
    if grid.size and (grid[0] < 0 or grid[-1] > seq.horizon or np.any(np.diff(grid) < 0)):
        raise OutOfRangeError("grid must be sorted and inside [0, horizon]")
    return np.atleast_1d(piecewise_intensity(model, seq, path).value(grid))


def check_event_intensities(lam: np.ndarray) -> None:
    bad = np.flatnonzero(~(lam > 0))
    if bad.size:
        i = int(bad[0])
        raise ZeroIntensityError(f"fitted intensity is {lam[i]!r} at event {i}", index=i)
