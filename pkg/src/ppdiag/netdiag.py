"""Network diagnostics: per-pair K-S and Pearson matrices, residual split, NMF structure score."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import NetworkEventLog, PairIndex
from .diagnostics import ks_statistic, pearson_residual, rescaled_times
from .errors import NumericError, ValidationError
from .fit import FitOptions, NetworkFitResult
from .rng import RandomSource

__all__ = [
    "PairMatrix",
    "NmfResult",
    "ks_matrix",
    "pearson_matrix",
    "split_residuals",
    "nmf",
    "structure_score",
    "NMF_RESTARTS",
    "NMF_MAX_ITERATIONS",
    "NMF_TOLERANCE",
]

NMF_RESTARTS = 5
NMF_MAX_ITERATIONS = 500
NMF_TOLERANCE = 1e-6
_EPS = 1e-300  # guards 0/0 in the multiplicative updates


@dataclass
class PairMatrix:
    """Sender x receiver matrix with 1-based node labels and a masked diagonal.

    ``values`` is a masked array; masked cells are the diagonal plus any pair
    whose statistic is undefined. ``failures`` maps pairs to the error that
    masked them.
    """

    values: np.ma.MaskedArray
    failures: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.ma.array(self.values, dtype=float, copy=True)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValidationError("pair matrix must be square")
        mask = np.ma.getmaskarray(v).copy()
        np.fill_diagonal(mask, True)
        v.mask = mask
        data = v.filled(0.0)
        if not np.all(np.isfinite(data[~mask])):
            raise ValidationError("unmasked pair matrix entries must be finite")
        self.values = np.ma.array(data, mask=mask)

    @classmethod
    def from_dict(cls, node_count: int, entries: dict, failures: dict | None = None) -> "PairMatrix":
        data = np.zeros((node_count, node_count))
        mask = np.ones((node_count, node_count), dtype=bool)
        for pair, value in entries.items():
            if value is not None:
                data[pair.sender - 1, pair.receiver - 1] = value
                mask[pair.sender - 1, pair.receiver - 1] = False
        return cls(np.ma.array(data, mask=mask), dict(failures or {}))

    @property
    def node_count(self) -> int:
        return self.values.shape[0]

    @property
    def mask(self) -> np.ndarray:
        return np.ma.getmaskarray(self.values)

    def __getitem__(self, pair) -> float | None:
        i, j = (pair.sender, pair.receiver) if isinstance(pair, PairIndex) else pair
        if self.mask[i - 1, j - 1]:
            return None
        return float(self.values.data[i - 1, j - 1])

    def mean(self, cells=None) -> float:
        """Mean over unmasked cells, optionally restricted to a boolean selector."""
        sel = ~self.mask if cells is None else (~self.mask & np.asarray(cells, dtype=bool))
        if not sel.any():
            return float("nan")
        return float(self.values.data[sel].mean())

    def reorder(self, order) -> "PairMatrix":
        """Rows and columns permuted to the 1-based node ``order``."""
        idx = np.asarray(order, dtype=int) - 1
        if sorted(idx.tolist()) != list(range(self.node_count)):
            raise ValidationError("ordering must be a permutation of 1..N")
        return PairMatrix(self.values[np.ix_(idx, idx)], dict(self.failures))


def _per_pair(fn, log: NetworkEventLog, threads: int):
    pairs = list(log.pairs())
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(zip(pairs, pool.map(fn, pairs)))
    return [(p, fn(p)) for p in pairs]


def _check_cover(fit: NetworkFitResult, log: NetworkEventLog):
    missing = [p for p in log.pairs() if p not in fit.per_pair_models]
    if missing:
        raise ValidationError(f"fit does not cover pair {missing[0]}")


def ks_matrix(fit: NetworkFitResult, log: NetworkEventLog, threads: int = 1) -> PairMatrix:
    """Per-pair K-S statistic of the rescaled times against Exp(1).

    Zero-event pairs are masked. Pairs whose computation fails numerically are
    masked and listed in ``failures``.
    """
    _check_cover(fit, log)

    def one(pair):
        seq = log.sequence(pair)
        if len(seq) == 0:
            return None, None
        try:
            model = fit.model(pair)
            return ks_statistic(rescaled_times(model, seq, fit.path(pair, seq))), None
        except NumericError as exc:
            return None, str(exc)

    results = _per_pair(one, log, threads)
    entries = {p: v for p, (v, _) in results}
    failures = {p: why for p, (_, why) in results if why is not None}
    return PairMatrix.from_dict(log.node_count, entries, failures)


def pearson_matrix(fit: NetworkFitResult, log: NetworkEventLog, t: float | None = None, threads: int = 1) -> PairMatrix:
    """Per-pair Pearson residual at ``t`` (default: the horizon)."""
    _check_cover(fit, log)
    t = log.horizon if t is None else float(t)
    if not 0 < t <= log.horizon:
        raise ValidationError(f"t must lie in (0, {log.horizon}], got {t}")

    def one(pair):
        seq = log.sequence(pair)
        try:
            return pearson_residual(fit.model(pair), seq, fit.path(pair, seq), t), None
        except NumericError as exc:
            return None, str(exc)

    results = _per_pair(one, log, threads)
    entries = {p: v for p, (v, _) in results}
    failures = {p: why for p, (_, why) in results if why is not None}
    return PairMatrix.from_dict(log.node_count, entries, failures)


def split_residuals(m: PairMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Underestimation (positive part) and overestimation (|negative part|) matrices.

    Masked cells become 0 in both, so the outputs are plain non-negative arrays
    ready for NMF.
    """
    data = m.values.filled(0.0)
    pos = np.where(data > 0, data, 0.0)
    neg = np.where(data < 0, -data, 0.0)
    return pos, neg


@dataclass
class NmfResult:
    w: np.ndarray
    h: np.ndarray
    relative_error: float
    iterations: int
    converged: bool
    restart: int = 0
    objectives: list = field(default_factory=list)  # per-iteration ||A - WH||_F^2 of the chosen restart
    all_objectives: list = field(default_factory=list)  # one history per restart


def _nmf_once(a, k, w, h, max_iterations, tol):
    history = [float(np.sum((a - w @ h) ** 2))]
    converged = False
    it = 0
    for it in range(1, max_iterations + 1):
        h *= (w.T @ a) / (w.T @ w @ h + _EPS)
        w *= (a @ h.T) / (w @ (h @ h.T) + _EPS)
        f = float(np.sum((a - w @ h) ** 2))
        prev = history[-1]
        history.append(f)
        if prev == 0 or (prev - f) <= tol * prev:
            converged = True
            break
    return w, h, history, it, converged


def nmf(
    a,
    k: int = 2,
    opts: FitOptions | None = None,
    *,
    restarts: int = NMF_RESTARTS,
    max_iterations: int = NMF_MAX_ITERATIONS,
    tolerance: float = NMF_TOLERANCE,
    rng: RandomSource | None = None,
) -> NmfResult:
    """Lee-Seung multiplicative-update NMF for the Frobenius objective.

    Each restart draws ``W`` and ``H`` uniformly and scales them so that the
    initial product has the same mean as ``a``. The restart with the lowest
    relative error is returned.

    Parameters
    ----------
    a : array_like, shape (n, m)
        Non-negative matrix.
    k : int
        Inner rank, ``1 <= k < min(n, m)``.
    opts : FitOptions, optional
        Supplies the random source when ``rng`` is not given.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValidationError("NMF input must be a matrix")
    if not np.all(np.isfinite(a)) or np.any(a < 0):
        raise ValidationError("NMF input must be finite and non-negative")
    n, m = a.shape
    if not 1 <= k < min(n, m):
        raise ValidationError(f"k must satisfy 1 <= k < {min(n, m)}, got {k}")
    if restarts < 1:
        raise ValidationError("restarts must be >= 1")
    norm = float(np.linalg.norm(a))
    if norm == 0:
        return NmfResult(np.zeros((n, k)), np.zeros((k, m)), 0.0, 0, True, 0, [0.0], [[0.0]])

    if rng is None:
        rng = (opts or FitOptions()).rng
    scale = 2.0 * np.sqrt(a.mean() / k)
    best = None
    histories = []
    for r in range(restarts):
        gen = rng.child(r).generator
        w0 = gen.uniform(size=(n, k)) * scale
        h0 = gen.uniform(size=(k, m)) * scale
        w, h, hist, its, conv = _nmf_once(a, k, w0, h0, max_iterations, tolerance)
        histories.append(hist)
        err = float(np.linalg.norm(a - w @ h)) / norm
        if best is None or err < best.relative_error:
            best = NmfResult(w, h, err, its, conv, r, hist)
    best.all_objectives = histories
    return best


def structure_score(a, k: int = 2, opts: FitOptions | None = None, **kwargs) -> float:
    """``||A - WH||_F / ||A||_F`` for the best NMF; larger means more structured misfit."""
    return nmf(a, k, opts, **kwargs).relative_error
