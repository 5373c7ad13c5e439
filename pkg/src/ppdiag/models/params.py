"""Parameter types for the four intensity models and the latent 2-state path."""

from __future__ import annotations

import math
import numbers
from dataclasses import asdict, dataclass
from typing import ClassVar, Union

import numpy as np

from ..errors import ValidationError

__all__ = [
    "PoissonParams",
    "HawkesParams",
    "GeneratorMatrix",
    "MmppParams",
    "MmhpParams",
    "LatentPath",
    "NetworkBaseParams",
    "BlockAlphaSpec",
    "ModelSpec",
    "is_modulated",
    "model_from_dict",
    "model_to_dict",
]


def _require(cond, msg):
    if not cond:
        raise ValidationError(msg)


def _finite(**values):
    for name, v in values.items():
        _require(isinstance(v, numbers.Real) and math.isfinite(v), f"{name} must be a finite number, got {v!r}")


@dataclass(frozen=True)
class PoissonParams:
    """Homogeneous Poisson rate.

    ``lam == 0`` is only produced by :func:`ppdiag.fit.fit_poisson` on an empty
    sequence and is flagged there as degenerate.
    """

    lam: float
    kind: ClassVar[str] = "poisson"

    def __post_init__(self):
        _finite(lam=self.lam)
        _require(self.lam >= 0, f"lambda must be positive, got {self.lam}")


@dataclass(frozen=True)
class HawkesParams:
    """Exponential-kernel Hawkes: ``lam1 + alpha * sum exp(-beta (t - t_m))``."""

    lam1: float
    alpha: float
    beta: float
    kind: ClassVar[str] = "hawkes"

    def __post_init__(self):
        _finite(lam1=self.lam1, alpha=self.alpha, beta=self.beta)
        _require(self.lam1 > 0, f"lambda1 must be > 0, got {self.lam1}")
        _require(self.alpha >= 0, f"alpha must be >= 0, got {self.alpha}")
        _require(self.beta > 0, f"beta must be > 0, got {self.beta}")

    @property
    def branching_ratio(self) -> float:
        return self.alpha / self.beta

    @property
    def stationary(self) -> bool:
        return self.branching_ratio < 1.0


@dataclass(frozen=True)
class GeneratorMatrix:
    """Two-state CTMC generator stored as its off-diagonal rates."""

    q01: float
    q10: float

    def __post_init__(self):
        _finite(q01=self.q01, q10=self.q10)
        _require(self.q01 >= 0 and self.q10 >= 0, "generator rates must be non-negative")

    def matrix(self) -> np.ndarray:
        return np.array([[-self.q01, self.q01], [self.q10, -self.q10]])

    def stationary(self) -> tuple[float, float]:
        """Stationary law (pi0, pi1); requires at least one positive rate."""
        total = self.q01 + self.q10
        _require(total > 0, "stationary distribution undefined when both rates are 0")
        return self.q10 / total, self.q01 / total

    def exit_rate(self, state: int) -> float:
        return self.q01 if state == 0 else self.q10


@dataclass(frozen=True)
class MmppParams:
    """Markov-modulated Poisson process. State 1 is the active state."""

    lam0: float
    lam1: float
    q: GeneratorMatrix
    kind: ClassVar[str] = "mmpp"

    def __post_init__(self):
        _finite(lam0=self.lam0, lam1=self.lam1)
        _require(self.lam0 > 0, f"lambda0 must be > 0, got {self.lam0}")
        _require(self.lam1 >= self.lam0, f"lambda1 ({self.lam1}) must not be below lambda0 ({self.lam0})")


@dataclass(frozen=True)
class MmhpParams:
    """Markov-modulated Hawkes process.

    State 0 is Poisson(``lam0``); state 1 is Hawkes with baseline ``lam1`` whose
    excitation sums over every earlier event regardless of the state it fell in.
    """

    lam0: float
    lam1: float
    alpha: float
    beta: float
    q: GeneratorMatrix
    kind: ClassVar[str] = "mmhp"

    def __post_init__(self):
        _finite(lam0=self.lam0, lam1=self.lam1, alpha=self.alpha, beta=self.beta)
        _require(self.lam0 > 0 and self.lam1 > 0, "lambda0 and lambda1 must be > 0")
        _require(self.alpha >= 0, f"alpha must be >= 0, got {self.alpha}")
        _require(self.beta > 0, f"beta must be > 0, got {self.beta}")

    def hawkes(self) -> HawkesParams:
        return HawkesParams(self.lam1, self.alpha, self.beta)


ModelSpec = Union[PoissonParams, HawkesParams, MmppParams, MmhpParams]
MODEL_TYPES = {cls.kind: cls for cls in (PoissonParams, HawkesParams, MmppParams, MmhpParams)}


def is_modulated(model) -> bool:
    return isinstance(model, (MmppParams, MmhpParams))


def model_to_dict(model: ModelSpec) -> dict:
    body = asdict(model)
    return {"model": model.kind, "params": body}


def model_from_dict(d: dict) -> ModelSpec:
    try:
        cls = MODEL_TYPES[d["model"]]
        params = dict(d["params"])
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed model description: {exc}") from None
    if "q" in params:
        params["q"] = GeneratorMatrix(**params["q"])
    try:
        return cls(**params)
    except TypeError as exc:
        raise ValidationError(f"bad parameters for {d['model']}: {exc}") from None


@dataclass(frozen=True, eq=False)
class LatentPath:
    """Piecewise-constant trajectory of the 2-state chain on (0, horizon].

    Segment ``i`` is ``(transition_times[i-1], transition_times[i]]`` and carries
    ``states[i]``, so the path is left-continuous at each transition.
    """

    transition_times: np.ndarray
    states: np.ndarray
    horizon: float

    def __post_init__(self):
        tt = np.array(self.transition_times, dtype=np.float64).ravel()
        st = np.array(self.states, dtype=np.int8).ravel()
        horizon = float(self.horizon)
        _require(st.size == tt.size + 1, "need exactly one more state than transitions")
        _require(np.all((st == 0) | (st == 1)), "states must be 0 or 1")
        _require(np.all(st[1:] != st[:-1]), "consecutive states must differ")
        if tt.size:
            _require(np.all(np.diff(tt) > 0), "transition times must be strictly increasing")
            _require(tt[0] > 0 and tt[-1] < horizon, "transition times must lie in (0, horizon)")
        tt.setflags(write=False)
        st.setflags(write=False)
        object.__setattr__(self, "transition_times", tt)
        object.__setattr__(self, "states", st)
        object.__setattr__(self, "horizon", horizon)

    @classmethod
    def constant(cls, state: int, horizon: float) -> "LatentPath":
        return cls(np.empty(0), np.array([state]), horizon)

    @classmethod
    def from_grid(cls, grid, states, horizon: float) -> "LatentPath":
        """Collapse per-cell states (cell k ends at ``grid[k]``) into runs."""
        states = np.asarray(states, dtype=np.int8)
        grid = np.asarray(grid, dtype=np.float64)
        change = np.flatnonzero(states[1:] != states[:-1])
        return cls(grid[change], np.concatenate([states[:1], states[change + 1]]), horizon)

    def __eq__(self, other):
        if not isinstance(other, LatentPath):
            return NotImplemented
        return (
            self.horizon == other.horizon
            and np.array_equal(self.transition_times, other.transition_times)
            and np.array_equal(self.states, other.states)
        )

    def state_at(self, t):
        """State at time(s) ``t``."""
        idx = np.searchsorted(self.transition_times, t, side="left")
        out = self.states[idx]
        return int(out) if np.ndim(out) == 0 else out

    def segments(self) -> list[tuple[float, float, int]]:
        edges = np.concatenate([[0.0], self.transition_times, [self.horizon]])
        return [(float(edges[i]), float(edges[i + 1]), int(s)) for i, s in enumerate(self.states)]

    def occupancy(self, state: int = 0) -> float:
        """Fraction of (0, horizon] spent in ``state``."""
        return sum(b - a for a, b, s in self.segments() if s == state) / self.horizon

    def to_dict(self) -> dict:
        return {
            "transition_times": [float(x) for x in self.transition_times],
            "states": [int(s) for s in self.states],
            "horizon": self.horizon,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LatentPath":
        return cls(np.array(d["transition_times"], dtype=float), np.array(d["states"]), d["horizon"])


@dataclass(frozen=True)
class NetworkBaseParams:
    """MMHP parameters shared by every pair of a network; alpha is supplied per pair."""

    lam0: float
    lam1: float
    beta: float
    q: GeneratorMatrix

    def with_alpha(self, alpha: float) -> MmhpParams:
        return MmhpParams(self.lam0, self.lam1, alpha, self.beta, self.q)


@dataclass(frozen=True)
class BlockAlphaSpec:
    """Block-structured excitation: ``within_alpha`` inside a class, ``between_alpha`` across."""

    blocks: tuple
    within_alpha: float
    between_alpha: float

    def __post_init__(self):
        blocks = tuple(tuple(int(v) for v in b) for b in self.blocks)
        _require(len(blocks) >= 1 and all(blocks), "blocks must be non-empty")
        flat = [v for b in blocks for v in b]
        _require(len(flat) == len(set(flat)), "blocks must be disjoint")
        _require(self.within_alpha > 0 and self.between_alpha > 0, "alphas must be > 0")
        object.__setattr__(self, "blocks", blocks)

    def validate(self, node_count: int) -> "BlockAlphaSpec":
        flat = sorted(v for b in self.blocks for v in b)
        _require(
            flat == list(range(1, node_count + 1)),
            f"partition must cover nodes 1..{node_count} exactly once, got {flat}",
        )
        return self

    def block_of(self, node: int) -> int:
        for k, b in enumerate(self.blocks):
            if node in b:
                return k
        raise ValidationError(f"node {node} is not in any block")

    def alpha(self, sender: int, receiver: int) -> float:
        same = self.block_of(sender) == self.block_of(receiver)
        return self.within_alpha if same else self.between_alpha
