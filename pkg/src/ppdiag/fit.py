"""Maximum-likelihood fitting by multistart Nelder-Mead in log space."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .core import EventSequence, NetworkEventLog, PairIndex
from .errors import ConvergenceError, NumericError, UnderIdentifiedError, ValidationError
from .models import _kernels
from .models.likelihood import decode_latent_path, loglik, loglik_hawkes, loglik_mmhp, loglik_mmpp
from .models.params import (
    GeneratorMatrix,
    HawkesParams,
    LatentPath,
    MmhpParams,
    MmppParams,
    ModelSpec,
    PoissonParams,
)
from .rng import RandomSource

log = logging.getLogger(__name__)

__all__ = [
    "FitOptions",
    "FitResult",
    "NetworkModelKind",
    "NetworkFitResult",
    "fit_poisson",
    "fit_hawkes",
    "fit_mmpp",
    "fit_mmhp",
    "fit_model",
    "fit_network",
    "network_truth",
    "MIN_EVENTS",
]

MIN_EVENTS = {"poisson": 0, "hawkes": 3, "mmpp": 5, "mmhp": 8}

# log-space box; outside it exp() under/overflows long before the likelihood cares
_LOG_BOUND = 30.0
# Nelder-Mead reruns from its own endpoint; the simplex stalls in flat directions
MAX_RESTARTS = 4


@dataclass
class FitOptions:
    max_iterations: int = 2000
    relative_tolerance: float = 1e-6
    multistart_count: int = 10
    rng: RandomSource = field(default_factory=RandomSource)
    start_spread: float = 1.0  # sd of the log-space perturbation for starts after the first
    threads: int = 1

    def __post_init__(self):
        if not self.relative_tolerance > 0:
            raise ValidationError("relative_tolerance must be > 0")
        if self.multistart_count < 1:
            raise ValidationError("multistart_count must be >= 1")
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be >= 1")


@dataclass
class FitResult:
    model: ModelSpec
    loglik: float
    converged: bool
    iterations: int
    start_index: int
    path: LatentPath | None = None
    degenerate: bool = False
    start_loglik: float = math.nan
    starts: list = field(default_factory=list)


@dataclass
class _Start:
    index: int
    x0: np.ndarray
    loglik: float
    converged: bool
    iterations: int
    x: np.ndarray
    message: str


def _run_multistart(negloglik, x0, opts: FitOptions, rng: RandomSource, extra_starts=()):
    """Minimize ``negloglik`` from ``extra_starts``, ``x0`` and random perturbations of it.

    At most ``opts.multistart_count`` starts are run, taken in that order.

    Returns (best start, all starts, loglik at x0). Raises ConvergenceError when
    no start converged.
    """
    x0 = np.asarray(x0, dtype=float)

    def objective(x):
        if np.any(np.abs(x) > _LOG_BOUND):
            return math.inf
        try:
            v = negloglik(x)
        except (NumericError, ValidationError, FloatingPointError, OverflowError, ZeroDivisionError):
            return math.inf
        return v if math.isfinite(v) else math.inf

    f0 = objective(x0)
    scale = 1.0 + (abs(f0) if math.isfinite(f0) else 0.0)
    # warm starts first, then the default start, then perturbations of it
    starts = [np.asarray(s, dtype=float) for s in extra_starts] + [x0]
    gen = rng.generator
    while len(starts) < opts.multistart_count:
        starts.append(x0 + opts.start_spread * gen.standard_normal(x0.size))
    starts = starts[: opts.multistart_count]
    results = []
    nm = {
        "maxiter": opts.max_iterations,
        "maxfev": 4 * opts.max_iterations,
        "xatol": 1e-4,
        "fatol": opts.relative_tolerance * scale,
        "adaptive": x0.size > 4,
    }
    for k, s in enumerate(starts):
        res = minimize(objective, s, method="Nelder-Mead", options=nm)
        nit, ok = int(res.nit), False
        # converged once a successful run is confirmed by a restart that cannot improve it
        for _ in range(MAX_RESTARTS):
            if not math.isfinite(res.fun):
                break
            again = minimize(objective, res.x, method="Nelder-Mead", options=nm)
            nit += int(again.nit)
            settled = res.success and again.success and res.fun - again.fun <= nm["fatol"]
            if again.fun <= res.fun:
                res = again
            if settled:
                ok = True
                break
        ok = ok and math.isfinite(res.fun)
        results.append(_Start(k, s, -float(res.fun), ok, nit, np.asarray(res.x), str(res.message)))
        log.debug("start %d: loglik=%.6f converged=%s nit=%d", k, -res.fun, ok, nit)
    converged = [r for r in results if r.converged]
    if not converged:
        raise ConvergenceError(
            "no optimizer start converged",
            diagnostics=[(r.index, r.loglik, r.iterations, r.message) for r in results],
        )
    best = max(converged, key=lambda r: r.loglik)
    return best, results, -f0


def _start_table(results):
    return [{"index": r.index, "loglik": r.loglik, "converged": r.converged, "iterations": r.iterations} for r in results]


def _require_events(seq: EventSequence, kind: str):
    need = MIN_EVENTS[kind]
    if len(seq) < need:
        raise UnderIdentifiedError(f"{kind} needs at least {need} events, got {len(seq)}")


def fit_poisson(seq: EventSequence, opts: FitOptions | None = None) -> FitResult:
    """Closed-form MLE ``M / T``. An empty sequence gives the flagged boundary fit ``lam = 0``."""
    m = len(seq)
    model = PoissonParams(m / seq.horizon)
    ll = loglik(model, seq)
    return FitResult(model, ll, True, 0, 0, degenerate=(m == 0), start_loglik=ll)


def _hawkes_from_x(x):
    return HawkesParams(math.exp(x[0]), math.exp(x[1]), math.exp(x[2]))


def fit_hawkes(seq: EventSequence, opts: FitOptions | None = None) -> FitResult:
    """MLE over (log lam1, log alpha, log beta) from ``lam1 = M/(2T)``, ``alpha = beta = 1``."""
    opts = opts or FitOptions()
    _require_events(seq, "hawkes")
    x0 = np.array([math.log(0.5 * len(seq) / seq.horizon), 0.0, 0.0])
    best, results, ll0 = _run_multistart(lambda x: -loglik_hawkes(_hawkes_from_x(x), seq), x0, opts, opts.rng)
    model = _hawkes_from_x(best.x)
    return FitResult(model, loglik(model, seq), True, best.iterations, best.index,
                     start_loglik=ll0, starts=_start_table(results))


def _mmpp_from_x(x):
    lam0 = math.exp(x[0])
    return MmppParams(lam0, lam0 + math.exp(x[1]), GeneratorMatrix(math.exp(x[2]), math.exp(x[3])))


def fit_mmpp(seq: EventSequence, opts: FitOptions | None = None) -> FitResult:
    """MLE over (log lam0, eta, log q01, log q10) with ``lam1 = lam0 + exp(eta)``."""
    opts = opts or FitOptions()
    _require_events(seq, "mmpp")
    rate = len(seq) / seq.horizon
    x0 = np.array([math.log(0.5 * rate), math.log(1.5 * rate), math.log(10 / seq.horizon), math.log(10 / seq.horizon)])
    best, results, ll0 = _run_multistart(lambda x: -loglik_mmpp(_mmpp_from_x(x), seq), x0, opts, opts.rng)
    model = _mmpp_from_x(best.x)
    return FitResult(model, loglik(model, seq), True, best.iterations, best.index,
                     path=decode_latent_path(model, seq), start_loglik=ll0, starts=_start_table(results))


def _mmhp_from_x(x):
    lam0 = math.exp(x[0])
    return MmhpParams(
        lam0, lam0 + math.exp(x[1]), math.exp(x[2]), math.exp(x[3]),
        GeneratorMatrix(math.exp(x[4]), math.exp(x[5])),
    )


def _mmhp_to_x(p: MmhpParams):
    return np.array([
        math.log(p.lam0), math.log(max(p.lam1 - p.lam0, 1e-12 * p.lam0)), math.log(p.alpha),
        math.log(p.beta), math.log(p.q.q01), math.log(p.q.q10),
    ])


def _mmhp_start(events: int, pairs: int, horizon: float):
    rate = events / (pairs * horizon)
    q = math.log(10 / horizon)
    return np.array([math.log(0.5 * rate), math.log(0.5 * rate), 0.0, 0.0, q, q])


def fit_mmhp(seq: EventSequence, opts: FitOptions | None = None, warm_start: MmhpParams | None = None) -> FitResult:
    """MLE over (log lam0, eta, log alpha, log beta, log q01, log q10), ``lam1 = lam0 + exp(eta)``.

    ``warm_start`` is tried first, ahead of the moment-based start. The decoded
    Viterbi path of the winner is kept on the result.
    """
    opts = opts or FitOptions()
    _require_events(seq, "mmhp")
    x0 = _mmhp_start(max(len(seq), 1), 1, seq.horizon)
    extra = [] if warm_start is None else [_mmhp_to_x(warm_start)]
    best, results, ll0 = _run_multistart(lambda x: -loglik_mmhp(_mmhp_from_x(x), seq), x0, opts, opts.rng, extra)
    model = _mmhp_from_x(best.x)
    return FitResult(model, loglik(model, seq), True, best.iterations, best.index,
                     path=decode_latent_path(model, seq), start_loglik=ll0, starts=_start_table(results))


FITTERS = {"poisson": fit_poisson, "hawkes": fit_hawkes, "mmpp": fit_mmpp, "mmhp": fit_mmhp}


def fit_model(kind: str, seq: EventSequence, opts: FitOptions | None = None) -> FitResult:
    try:
        fitter = FITTERS[kind]
    except KeyError:
        raise ValidationError(f"unknown model kind {kind!r}; choose from {sorted(FITTERS)}") from None
    return fitter(seq, opts)


# --------------------------------------------------------------------------- network


@dataclass(frozen=True)
class NetworkModelKind:
    """``homogeneous``, ``block`` (with a node partition) or ``heterogeneous``."""

    name: str
    partition: tuple | None = None

    def __post_init__(self):
        if self.name not in ("homogeneous", "block", "heterogeneous"):
            raise ValidationError(f"unknown network model {self.name!r}")
        if self.name == "block":
            if not self.partition:
                raise ValidationError("block model needs a partition")
            object.__setattr__(self, "partition", tuple(tuple(int(v) for v in b) for b in self.partition))
        elif self.partition is not None:
            raise ValidationError(f"{self.name} model takes no partition")

    @classmethod
    def homogeneous(cls):
        return cls("homogeneous")

    @classmethod
    def block(cls, partition):
        return cls("block", partition)

    @classmethod
    def heterogeneous(cls):
        return cls("heterogeneous")

    def validate(self, node_count: int) -> "NetworkModelKind":
        if self.partition is not None:
            flat = sorted(v for b in self.partition for v in b)
            if flat != list(range(1, node_count + 1)):
                raise ValidationError(f"partition must cover nodes 1..{node_count} exactly once")
        return self


@dataclass
class NetworkFitResult:
    kind: NetworkModelKind | None
    per_pair_models: dict
    shared_loglik: float
    paths: dict = field(default_factory=dict)
    converged: bool = True
    iterations: int = 0
    fallback_pairs: list = field(default_factory=list)
    failures: dict = field(default_factory=dict)
    label: str = ""

    def model(self, pair: PairIndex) -> ModelSpec:
        return self.per_pair_models[pair]

    def path(self, pair: PairIndex, seq: EventSequence | None = None) -> LatentPath | None:
        """Plug-in latent path for ``pair``; decoded on demand when not stored."""
        p = self.paths.get(pair)
        if p is None and seq is not None and isinstance(self.per_pair_models[pair], (MmppParams, MmhpParams)):
            p = decode_latent_path(self.per_pair_models[pair], seq)
            self.paths[pair] = p
        return p


class _Concatenated:
    """All pair sequences of a log stacked for the compiled likelihood."""

    def __init__(self, log: NetworkEventLog):
        self.pairs = log.pairs()
        seqs = [log.sequence(p) for p in self.pairs]
        self.times = np.concatenate([s.times for s in seqs]) if seqs else np.empty(0)
        self.offsets = np.concatenate([[0], np.cumsum([len(s) for s in seqs])]).astype(np.int64)
        self.horizon = log.horizon
        self.n = len(self.pairs)
        self.events = len(log)

    def logliks(self, lam0, lam1, alpha, beta, q01, q10) -> np.ndarray:
        n = self.n
        full = lambda v: np.broadcast_to(np.asarray(v, dtype=float), (n,)).copy()
        return _kernels.modulated_loglik_many(
            self.times, self.offsets, self.horizon,
            full(lam0), full(lam1), full(alpha), full(beta), full(q01), full(q10),
        )


def _block_index(partition, pairs):
    cls = {v: k for k, b in enumerate(partition) for v in b}
    kk = len(partition)
    return np.array([cls[p.sender] * kk + cls[p.receiver] for p in pairs]), kk * kk


def _decode_all(models: dict, log: NetworkEventLog) -> dict:
    return {p: decode_latent_path(m, log.sequence(p)) for p, m in models.items()}


def _fit_shared(data: _Concatenated, cells: np.ndarray, n_alpha: int, opts, warm_start):
    """Shared lam0, lam1, beta, Q; one alpha per cell label."""

    def unpack(x):
        lam0 = math.exp(x[0])
        lam1 = lam0 + math.exp(x[1])
        return lam0, lam1, math.exp(x[2]), math.exp(x[3]), math.exp(x[4]), np.exp(x[5:])[cells]

    def negloglik(x):
        lam0, lam1, beta, q01, q10, alpha = unpack(x)
        total = float(np.sum(data.logliks(lam0, lam1, alpha, beta, q01, q10)))
        if not math.isfinite(total):
            raise NumericError("non-finite network log-likelihood")
        return -total

    s = _mmhp_start(max(data.events, 1), data.n, data.horizon)
    x0 = np.concatenate([s[[0, 1, 3, 4, 5]], np.full(n_alpha, s[2])])
    extra = []
    if warm_start is not None:
        extra.append(warm_start(n_alpha))
    best, results, _ = _run_multistart(negloglik, x0, opts, opts.rng, extra)
    return unpack(best.x), best


def fit_network(
    log: NetworkEventLog,
    kind: NetworkModelKind,
    opts: FitOptions | None = None,
    *,
    min_events: int = 8,
    warm_start: NetworkFitResult | None = None,
) -> NetworkFitResult:
    """Fit a network MMHP.

    ``homogeneous`` shares all parameters across pairs; ``block`` shares
    everything except one alpha per ordered class pair; ``heterogeneous`` fits
    each pair with at least ``min_events`` events on its own and gives the rest
    the homogeneous estimate (listed in ``fallback_pairs``). ``warm_start`` (a
    previous homogeneous fit) seeds the block fit and saves the heterogeneous
    model a homogeneous pass.
    """
    opts = opts or FitOptions()
    kind.validate(log.node_count)
    data = _Concatenated(log)

    def warm(n_alpha):
        m = next(iter(warm_start.per_pair_models.values()))
        x = _mmhp_to_x(m)
        return np.concatenate([x[[0, 1, 3, 4, 5]], np.full(n_alpha, math.log(_mean_alpha(warm_start)))])

    seed = warm if warm_start is not None else None
    if kind.name == "block":
        cells, n_alpha = _block_index(kind.partition, data.pairs)
        (lam0, lam1, beta, q01, q10, alpha), best = _fit_shared(data, cells, n_alpha, opts, seed)
        models = {p: MmhpParams(lam0, lam1, float(a), beta, GeneratorMatrix(q01, q10)) for p, a in zip(data.pairs, alpha)}
        return NetworkFitResult(
            kind, models, _network_loglik(models, log), paths=_decode_all(models, log),
            iterations=best.iterations, label="block",
        )

    if kind.name == "heterogeneous" and warm_start is not None:
        homog = warm_start
    else:
        cells = np.zeros(data.n, dtype=np.int64)
        (lam0, lam1, beta, q01, q10, alpha), best = _fit_shared(data, cells, 1, opts, seed)
        shared = MmhpParams(lam0, lam1, float(alpha[0]), beta, GeneratorMatrix(q01, q10))
        models = {p: shared for p in data.pairs}
        homog = NetworkFitResult(
            NetworkModelKind.homogeneous(), models, _network_loglik(models, log),
            paths=_decode_all(models, log), iterations=best.iterations, label="homogeneous",
        )
        if kind.name == "homogeneous":
            return homog

    # heterogeneous
    def one(pair):
        seq = log.sequence(pair)
        if len(seq) < max(min_events, MIN_EVENTS["mmhp"]):
            return pair, None, "below event threshold"
        pair_opts = FitOptions(
            opts.max_iterations, opts.relative_tolerance, opts.multistart_count,
            opts.rng.child(pair.sender, pair.receiver), opts.start_spread,
        )
        try:
            return pair, fit_mmhp(seq, pair_opts, warm_start=homog.per_pair_models[pair]), None
        except (ConvergenceError, NumericError) as exc:
            return pair, None, str(exc)

    if opts.threads > 1:
        with ThreadPoolExecutor(opts.threads) as pool:
            outcomes = list(pool.map(one, data.pairs))
    else:
        outcomes = [one(p) for p in data.pairs]
    models, paths, fallback, failures = {}, {}, [], {}
    for pair, res, why in outcomes:
        if res is None:
            models[pair] = homog.per_pair_models[pair]
            paths[pair] = homog.path(pair, log.sequence(pair))
            fallback.append(pair)
            if why != "below event threshold":
                failures[pair] = why
        else:
            models[pair] = res.model
            paths[pair] = res.path
    return NetworkFitResult(
        kind, models, _network_loglik(models, log), paths=paths,
        converged=not failures, fallback_pairs=fallback, failures=failures, label="heterogeneous",
    )


def _mean_alpha(fit: NetworkFitResult) -> float:
    return float(np.mean([m.alpha for m in fit.per_pair_models.values()]))


def _network_loglik(models: dict, log: NetworkEventLog) -> float:
    """Sum of per-pair log-likelihoods in row-major pair order."""
    return float(sum(loglik(models[p], log.sequence(p)) for p in log.pairs()))


def network_truth(models: dict, paths: dict, log: NetworkEventLog, label: str = "true") -> NetworkFitResult:
    """Wrap simulation ground truth so it flows through the network diagnostics."""
    return NetworkFitResult(None, dict(models), _network_loglik(models, log), paths=dict(paths), label=label)
