"""Samplers for the four models and the block-structured network generator."""

from __future__ import annotations

import math

import numpy as np

from .core import EventSequence, NetworkEventLog, PairIndex, all_pairs
from .errors import ExplosionError, ValidationError
from .models.params import (
    BlockAlphaSpec,
    GeneratorMatrix,
    HawkesParams,
    LatentPath,
    MmhpParams,
    MmppParams,
    NetworkBaseParams,
)
from .rng import RandomSource

__all__ = [
    "MAX_EVENTS",
    "simulate_poisson",
    "simulate_ctmc",
    "simulate_hawkes",
    "simulate_mmpp",
    "simulate_mmhp",
    "simulate_network",
    "NetworkSimulation",
]

MAX_EVENTS = 10**7


def _check_horizon(horizon):
    if not horizon > 0:
        raise ValidationError(f"horizon must be > 0, got {horizon}")


def _poisson_times(rate, start, end, rng: RandomSource, out: list) -> None:
    t = start
    while True:
        t += rng.exponential(rate)
        if t > end:
            return
        out.append(t)
        if len(out) > MAX_EVENTS:
            raise ExplosionError(f"more than {MAX_EVENTS} events simulated")


def simulate_poisson(lam: float, horizon: float, rng: RandomSource) -> EventSequence:
    """Homogeneous Poisson process by exponential inter-arrival times."""
    _check_horizon(horizon)
    if not lam > 0:
        raise ValidationError(f"lambda must be > 0, got {lam}")
    times: list[float] = []
    _poisson_times(lam, 0.0, horizon, rng, times)
    return EventSequence(np.array(times), horizon)


def simulate_ctmc(q: GeneratorMatrix, horizon: float, rng: RandomSource, initial=None) -> LatentPath:
    """Gillespie path of the 2-state chain.

    The first state is drawn from ``initial`` (default: stationary law), then
    holding times are exponential with the current state's exit rate.
    """
    _check_horizon(horizon)
    p0, _ = q.stationary() if initial is None else initial
    state = 0 if rng.uniform() < p0 else 1
    states = [state]
    transitions = []
    t = 0.0
    while True:
        rate = q.exit_rate(state)
        if rate <= 0:
            break
        t += rng.exponential(rate)
        if t >= horizon:
            break
        state = 1 - state
        transitions.append(t)
        states.append(state)
    return LatentPath(np.array(transitions), np.array(states), horizon)


def _thin_modulated(lam0, lam1, alpha, beta, path: LatentPath, rng: RandomSource) -> list[float]:
    """Thinning against the path-dependent intensity.

    The bound is refreshed after every accepted event and at every latent
    transition; between those points the intensity can only decay.
    """
    times: list[float] = []
    excite = 0.0  # sum exp(-beta (t - t_k)) at the current time t
    t = 0.0
    for start, end, state in path.segments():
        if t < start:
            excite *= math.exp(-beta * (start - t))
            t = start
        while True:
            bound = lam0 if state == 0 else lam1 + alpha * excite
            w = rng.exponential(bound)
            if t + w > end:
                excite *= math.exp(-beta * (end - t))
                t = end
                break
            t += w
            excite *= math.exp(-beta * w)
            lam = lam0 if state == 0 else lam1 + alpha * excite
            if rng.uniform() * bound <= lam:
                times.append(t)
                excite += 1.0
                if len(times) > MAX_EVENTS:
                    raise ExplosionError(f"more than {MAX_EVENTS} events simulated")
    return times


def simulate_hawkes(params: HawkesParams, horizon: float, rng: RandomSource) -> EventSequence:
    """Ogata/Lewis thinning for the exponential-kernel Hawkes process."""
    _check_horizon(horizon)
    times = _thin_modulated(0.0, params.lam1, params.alpha, params.beta, LatentPath.constant(1, horizon), rng)
    return EventSequence(np.array(times), horizon)


def simulate_mmhp(params: MmhpParams, horizon: float, rng: RandomSource, initial=None):
    """Draw the latent path, then thin the state-dependent intensity along it.

    Returns ``(events, path)``; the path is exactly the one used for thinning.
    """
    _check_horizon(horizon)
    path = simulate_ctmc(params.q, horizon, rng, initial)
    times = _thin_modulated(params.lam0, params.lam1, params.alpha, params.beta, path, rng)
    return EventSequence(np.array(times), horizon), path


def simulate_mmpp(params: MmppParams, horizon: float, rng: RandomSource, initial=None):
    """Piecewise-homogeneous Poisson sampling along a simulated latent path."""
    _check_horizon(horizon)
    path = simulate_ctmc(params.q, horizon, rng, initial)
    times: list[float] = []
    for start, end, state in path.segments():
        _poisson_times(params.lam1 if state == 1 else params.lam0, start, end, rng, times)
    return EventSequence(np.array(times), horizon), path


class NetworkSimulation:
    """Simulated network log plus the per-pair ground truth."""

    def __init__(self, log: NetworkEventLog, models: dict, paths: dict):
        self.log = log
        self.models = models
        self.paths = paths


def simulate_network(
    base: NetworkBaseParams,
    alpha_spec: BlockAlphaSpec,
    node_count: int,
    horizon: float,
    rng: RandomSource,
) -> NetworkSimulation:
    """Independent MMHP per ordered pair with block-structured alpha.

    Pair ``(i, j)`` draws from ``rng.child(i, j)``, so each pair's stream does
    not depend on the order in which pairs are simulated.
    """
    _check_horizon(horizon)
    alpha_spec.validate(node_count)
    rows = []
    models: dict[PairIndex, MmhpParams] = {}
    paths: dict[PairIndex, LatentPath] = {}
    for pair in all_pairs(node_count):
        params = base.with_alpha(alpha_spec.alpha(pair.sender, pair.receiver))
        seq, path = simulate_mmhp(params, horizon, rng.child(pair.sender, pair.receiver))
        models[pair] = params
        paths[pair] = path
        rows.extend((t, pair.sender, pair.receiver) for t in seq.times)
    log = NetworkEventLog.from_events(node_count, rows, horizon)
    return NetworkSimulation(log, models, paths)
