"""Intensities, compensators and log-likelihoods."""

from __future__ import annotations

import math

import numpy as np

from ..core import EventSequence
from ..errors import NumericError, OutOfRangeError, UsageError, ValidationError
from . import _kernels
from .params import HawkesParams, LatentPath, MmhpParams, MmppParams, PoissonParams

__all__ = [
    "mat_exp_2x2",
    "hawkes_intensity",
    "hawkes_compensator",
    "loglik",
    "loglik_poisson",
    "loglik_hawkes",
    "loglik_mmpp",
    "loglik_mmhp",
    "decode_latent_path",
]


def mat_exp_2x2(m) -> np.ndarray:
    """Matrix exponential of a real 2x2 matrix.

    Closed form from the eigen-decomposition; near-defective inputs (eigenvalue
    gap below ``1e-8 * max|m_ij|``) go through (6, 6) Pade scaling and squaring.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (2, 2):
        raise ValidationError(f"expected a 2x2 matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NumericError("matrix exponential of a non-finite matrix")
    k00, k01, k10, k11, ls = _kernels.expm2_scaled(m[0, 0], m[0, 1], m[1, 0], m[1, 1])
    return math.exp(ls) * np.array([[k00, k01], [k10, k11]])


def _check_t(seq: EventSequence, t: float) -> float:
    t = float(t)
    if not (0.0 <= t <= seq.horizon):
        raise OutOfRangeError(f"t={t!r} outside [0, {seq.horizon!r}]")
    return t


def hawkes_intensity(params: HawkesParams, seq: EventSequence, t: float) -> float:
    """``lam1 + alpha * sum_{t_m < t} exp(-beta (t - t_m))``; an event at ``t`` is excluded."""
    t = _check_t(seq, t)
    past = seq.times[seq.times < t]
    return params.lam1 + params.alpha * float(np.sum(np.exp(-params.beta * (t - past))))


def hawkes_compensator(params: HawkesParams, seq: EventSequence, t: float) -> float:
    """Closed-form integral of the Hawkes intensity over [0, t]."""
    t = _check_t(seq, t)
    past = seq.times[seq.times < t]
    decayed = -np.expm1(-params.beta * (t - past))
    return params.lam1 * t + params.alpha / params.beta * float(np.sum(decayed))


def loglik_poisson(params: PoissonParams, seq: EventSequence) -> float:
    m = len(seq)
    if m == 0:
        return -params.lam * seq.horizon
    return m * math.log(params.lam) - params.lam * seq.horizon


def hawkes_event_intensities(params: HawkesParams, seq: EventSequence) -> np.ndarray:
    """Intensity at each event time (left limit) via the O(M) recursion."""
    # overflow surfaces as inf and is reported by the callers
    with np.errstate(over="ignore", invalid="ignore"):
        return params.lam1 + params.alpha * _kernels.hawkes_excitation(seq.times, params.beta)


def loglik_hawkes(params: HawkesParams, seq: EventSequence) -> float:
    lam = hawkes_event_intensities(params, seq)
    bad = np.flatnonzero(~np.isfinite(lam) | (lam <= 0))
    if bad.size:
        raise NumericError(f"non-finite Hawkes intensity at event {int(bad[0])}", index=int(bad[0]))
    value = float(np.sum(np.log(lam))) - hawkes_compensator(params, seq, seq.horizon)
    if not math.isfinite(value):
        raise NumericError("non-finite Hawkes log-likelihood")
    return value


def _initial(q, initial) -> tuple[float, float]:
    if initial is None:
        return q.stationary()
    p0, p1 = (float(x) for x in initial)
    if p0 < 0 or p1 < 0 or not math.isclose(p0 + p1, 1.0, abs_tol=1e-12):
        raise ValidationError(f"initial law must be a probability vector, got {initial!r}")
    return p0, p1


def _modulated_args(params):
    if isinstance(params, MmppParams):
        return params.lam0, params.lam1, 0.0, 0.0
    return params.lam0, params.lam1, params.alpha, params.beta


def _run_filter(params, seq, initial, refine=1) -> float:
    p0, p1 = _initial(params.q, initial)
    lam0, lam1, alpha, beta = _modulated_args(params)
    value, bad = _kernels.modulated_loglik(
        seq.times, seq.horizon, lam0, lam1, alpha, beta, params.q.q01, params.q.q10, p0, p1, refine
    )
    if bad >= 0:
        raise NumericError(f"forward filter broke down on interval {bad}", index=int(bad))
    return float(value)


def loglik_mmpp(params: MmppParams, seq: EventSequence, initial=None) -> float:
    """Exact marginal log-likelihood by scaled forward filtering.

    ``initial`` overrides the stationary initial law with ``(p0, p1)``.
    """
    if not isinstance(params, MmppParams):
        raise UsageError("loglik_mmpp needs MmppParams")
    return _run_filter(params, seq, initial)


def loglik_mmhp(params: MmhpParams, seq: EventSequence, initial=None, *, refine: int = 1) -> float:
    """Marginal log-likelihood with a sub-grid of ``max(8, ceil(4 beta tau))`` steps per gap.

    Each step uses the exact average of the Hawkes intensity over the step. Once
    the excitation left in a gap integrates to under ``1e-12`` the remainder is
    one step, which matches the uniform grid to that tolerance. ``refine``
    multiplies the substep count.
    """
    if not isinstance(params, MmhpParams):
        raise UsageError("loglik_mmhp needs MmhpParams")
    if int(refine) < 1:
        raise ValidationError("refine must be a positive integer")
    return _run_filter(params, seq, initial, int(refine))


def loglik(model, seq: EventSequence, initial=None) -> float:
    """Log-likelihood of any in-scope model."""
    if isinstance(model, PoissonParams):
        return loglik_poisson(model, seq)
    if isinstance(model, HawkesParams):
        return loglik_hawkes(model, seq)
    if isinstance(model, MmppParams):
        return loglik_mmpp(model, seq, initial)
    if isinstance(model, MmhpParams):
        return loglik_mmhp(model, seq, initial)
    raise UsageError(f"unknown model type {type(model).__name__}")


def decode_latent_path(params, seq: EventSequence, initial=None) -> LatentPath:
    """Viterbi (posterior-mode) state path on the filtering sub-grid.

    The grid has ``max(8, ceil(4 r tau))`` cells per gap with ``r = beta`` for
    the MMHP and ``r = q01 + q10`` for the MMPP. Transitions land on cell edges.
    """
    if not isinstance(params, (MmppParams, MmhpParams)):
        raise UsageError("only Markov-modulated models have a latent path")
    p0, p1 = _initial(params.q, initial)
    lam0, lam1, alpha, beta = _modulated_args(params)
    rate = beta if isinstance(params, MmhpParams) else params.q.q01 + params.q.q10
    grid, states = _kernels.modulated_viterbi(
        seq.times, seq.horizon, lam0, lam1, alpha, beta, params.q.q01, params.q.q10, p0, p1, rate
    )
    return LatentPath.from_grid(grid, states, seq.horizon)
