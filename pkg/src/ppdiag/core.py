"""Event streams on an observation window (0, T] and directed network event logs."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import OutOfRangeError, ValidationError

__all__ = [
    "EventSequence",
    "NetworkEventLog",
    "PairIndex",
    "counting_process",
    "project_pair",
    "jitter_ties",
    "TIE_EPSILON",
]

TIE_EPSILON = 1e-9


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class EventSequence:
    """Strictly increasing event times on (0, horizon].

    Parameters
    ----------
    times : array_like
        Event times. Ties and times at exactly 0 are rejected.
    horizon : float
        End of the observation window T.
    """

    times: np.ndarray
    horizon: float

    def __post_init__(self):
        times = _frozen(np.ravel(self.times))
        horizon = float(self.horizon)
        if not np.isfinite(horizon) or horizon <= 0:
            raise ValidationError(f"horizon must be a positive finite number, got {horizon!r}")
        if times.size:
            if not np.all(np.isfinite(times)):
                raise ValidationError("event times must be finite")
            if times[0] <= 0:
                raise ValidationError(f"event times must be > 0, got {times[0]!r} at index 0")
            steps = np.diff(times)
            bad = np.flatnonzero(steps <= 0)
            if bad.size:
                i = int(bad[0]) + 1
                raise ValidationError(
                    f"event times must be strictly increasing; index {i} ({times[i]!r}) "
                    f"does not exceed index {i - 1} ({times[i - 1]!r})"
                )
            if times[-1] > horizon:
                raise ValidationError(f"last event {times[-1]!r} exceeds horizon {horizon!r}")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "horizon", horizon)

    def __len__(self):
        return int(self.times.size)

    def __eq__(self, other):
        if not isinstance(other, EventSequence):
            return NotImplemented
        return self.horizon == other.horizon and np.array_equal(self.times, other.times)

    def __hash__(self):
        return hash((self.horizon, self.times.tobytes()))

    @property
    def count(self) -> int:
        return int(self.times.size)

    def counts(self, t) -> np.ndarray:
        """Vectorized N(t) for an array of times (no range check)."""
        return np.searchsorted(self.times, np.asarray(t, dtype=float), side="right")


def counting_process(seq: EventSequence, t: float) -> int:
    """Number of events in (0, t]."""
    t = float(t)
    if not (0.0 <= t <= seq.horizon):
        raise OutOfRangeError(f"t={t!r} outside [0, {seq.horizon!r}]")
    return int(np.searchsorted(seq.times, t, side="right"))


@dataclass(frozen=True, order=True)
class PairIndex:
    """Ordered (sender, receiver) pair; node ids start at 1."""

    sender: int
    receiver: int

    def __post_init__(self):
        if self.sender == self.receiver:
            raise ValidationError(f"self-loop pair ({self.sender}, {self.receiver}) is not allowed")

    def check(self, node_count: int) -> "PairIndex":
        for v in (self.sender, self.receiver):
            if not 1 <= v <= node_count:
                raise ValidationError(f"node id {v} outside 1..{node_count}")
        return self

    def __str__(self):
        return f"({self.sender},{self.receiver})"


def all_pairs(node_count: int) -> list[PairIndex]:
    """Every ordered pair of distinct nodes, row-major."""
    return [
        PairIndex(i, j)
        for i in range(1, node_count + 1)
        for j in range(1, node_count + 1)
        if i != j
    ]


@dataclass(frozen=True, eq=False)
class NetworkEventLog:
    """Time-sorted directed events ``(time, sender, receiver)`` over nodes 1..N."""

    node_count: int
    times: np.ndarray
    senders: np.ndarray
    receivers: np.ndarray
    horizon: float
    _pair_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        n = int(self.node_count)
        if n < 2:
            raise ValidationError(f"node_count must be >= 2, got {n}")
        times = np.asarray(self.times, dtype=np.float64).ravel()
        senders = np.asarray(self.senders, dtype=np.int64).ravel()
        receivers = np.asarray(self.receivers, dtype=np.int64).ravel()
        if not (times.size == senders.size == receivers.size):
            raise ValidationError("times, senders and receivers must have equal length")
        horizon = float(self.horizon)
        if not np.isfinite(horizon) or horizon <= 0:
            raise ValidationError(f"horizon must be a positive finite number, got {horizon!r}")
        if times.size:
            loops = np.flatnonzero(senders == receivers)
            if loops.size:
                raise ValidationError(f"self-loop event at row {int(loops[0])}")
            out = np.flatnonzero((senders < 1) | (senders > n) | (receivers < 1) | (receivers > n))
            if out.size:
                raise ValidationError(f"node id out of range 1..{n} at row {int(out[0])}")
            if np.any(np.diff(times) < 0):
                raise ValidationError("events must be sorted by time")
            if times[0] <= 0 or times[-1] > horizon:
                raise ValidationError(f"event times must lie in (0, {horizon}]")
        for name, a in (("times", times), ("senders", senders), ("receivers", receivers)):
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        object.__setattr__(self, "node_count", n)
        object.__setattr__(self, "horizon", horizon)
        # building each pair's EventSequence validates per-pair strict increase
        for pair in self.pairs():
            self.sequence(pair)

    @classmethod
    def from_events(cls, node_count: int, events: Iterable, horizon: float) -> "NetworkEventLog":
        """Build from ``(time, sender, receiver)`` triples in any order."""
        rows = sorted((float(t), int(i), int(j)) for t, i, j in events)
        if rows:
            t, s, r = (np.array(c) for c in zip(*rows))
        else:
            t, s, r = np.empty(0), np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
        return cls(node_count, t, s, r, horizon)

    def __len__(self):
        return int(self.times.size)

    def pairs(self) -> list[PairIndex]:
        return all_pairs(self.node_count)

    def sequence(self, pair: PairIndex) -> EventSequence:
        key = (pair.sender, pair.receiver)
        seq = self._pair_cache.get(key)
        if seq is None:
            sel = (self.senders == pair.sender) & (self.receivers == pair.receiver)
            seq = EventSequence(self.times[sel], self.horizon)
            self._pair_cache[key] = seq
        return seq

    def count_matrix(self) -> np.ndarray:
        """N x N event counts (0-based indices)."""
        counts = np.zeros((self.node_count, self.node_count), dtype=np.int64)
        np.add.at(counts, (self.senders - 1, self.receivers - 1), 1)
        return counts


def project_pair(log: NetworkEventLog, pair: PairIndex) -> EventSequence:
    """Event times of one ordered pair, on the log's horizon."""
    if not isinstance(pair, PairIndex):
        pair = PairIndex(*pair)
    pair.check(log.node_count)
    return log.sequence(pair)


def jitter_ties(times, epsilon: float = TIE_EPSILON) -> np.ndarray:
    """Break ties deterministically: the k-th member of a tie group gets ``+k*epsilon``.

    Input must already be sorted. Groups are formed on the original values, so
    jittered values are not re-compared against later groups.
    """
    times = np.asarray(times, dtype=np.float64)
    out = times.copy()
    k = 0
    for m in range(1, times.size):
        k = k + 1 if times[m] == times[m - 1] else 0
        out[m] = times[m] + k * epsilon
    if np.any(np.diff(out) <= 0):
        raise ValidationError("jitter could not separate tied times; epsilon too large for the gaps")
    return out
