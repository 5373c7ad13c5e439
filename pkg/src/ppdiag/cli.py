"""Command-line interface: simulate, fit, diagnose and netdiag.

Exit codes: 0 success, 1 validation error, 2 numeric or convergence error,
3 I/O error.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from . import io as pio
from . import svg
from .core import NetworkEventLog, PairIndex, project_pair
from .diagnostics import (
    ks_pvalue,
    ks_statistic,
    lowess,
    pearson_residual,
    qq_data,
    raw_residual,
    rescaled_times,
    residual_trajectory,
)
from .errors import CompatibilityError, NumericError, PPDiagError, UsageError, ValidationError
from .fit import FitOptions, NetworkModelKind, fit_model, fit_network, network_truth
from .models.params import (
    BlockAlphaSpec,
    GeneratorMatrix,
    HawkesParams,
    MmhpParams,
    MmppParams,
    NetworkBaseParams,
    PoissonParams,
    is_modulated,
)
from .models.piecewise import intensity_path
from .netdiag import ks_matrix, pearson_matrix, split_residuals, structure_score
from .rng import RandomSource
from .simulate import simulate_hawkes, simulate_mmhp, simulate_mmpp, simulate_network, simulate_poisson

log = logging.getLogger("ppdiag")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3
UNIVARIATE = ("poisson", "hawkes", "mmpp", "mmhp")
NETWORK = ("homogeneous", "block", "heterogeneous")
EXAMPLES = ("case1", "network", "cohort")


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, ValidationError):
        return EXIT_VALIDATION
    if isinstance(exc, NumericError):
        return EXIT_NUMERIC
    if isinstance(exc, OSError):
        return EXIT_IO
    return EXIT_NUMERIC if isinstance(exc, PPDiagError) else EXIT_VALIDATION


def _data_file(name: str) -> str:
    return resources.files("ppdiag").joinpath("data", name).read_text(encoding="utf-8")


def _sha256(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _provenance(command: str, config: dict) -> dict:
    return {"command": command, "config": config, "config_hash": pio.config_hash(config), "version": __version__}


# ---------------------------------------------------------------- config


def load_config(source: str) -> dict:
    """Parse and validate a simulate config; returns it with defaults filled in."""
    if source in EXAMPLES and not Path(source).exists():
        text = _data_file(f"{source}.json")
    else:
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    try:
        config = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config line {exc.lineno}: {exc.msg}") from None
    schema = json.loads(_data_file("simulate_config.schema.json"))
    errors = sorted(jsonschema.Draft202012Validator(schema).iter_errors(config), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ValidationError(f"config field {where}: {e.message}")
    config = copy.deepcopy(config)
    config.setdefault("seed", 0)
    return config


def _config_model(config: dict):
    p = config["params"]
    kind = config["model"]
    if kind == "poisson":
        return PoissonParams(p["lam"])
    if kind == "hawkes":
        return HawkesParams(p["lam1"], p["alpha"], p["beta"])
    if kind == "mmpp":
        return MmppParams(p["lam0"], p["lam1"], GeneratorMatrix(p["q01"], p["q10"]))
    if kind == "mmhp":
        return MmhpParams(p["lam0"], p["lam1"], p["alpha"], p["beta"], GeneratorMatrix(p["q01"], p["q10"]))
    spec = BlockAlphaSpec(config["blocks"], config["within_alpha"], config["between_alpha"])
    spec.validate(config["node_count"])
    return NetworkBaseParams(p["lam0"], p["lam1"], p["beta"], GeneratorMatrix(p["q01"], p["q10"])), spec


# ---------------------------------------------------------------- simulate


def cmd_simulate(args) -> int:
    config = load_config(args.config)
    out = _outdir(args.out)
    horizon = float(config["horizon"])
    rng = RandomSource(config["seed"])
    kind = config["model"]
    prov = _provenance("simulate", config)
    prov.update(horizon=horizon, events="events.csv")
    if kind == "network":
        (base, spec), n = _config_model(config), config["node_count"]
        sim = simulate_network(base, spec, n, horizon, rng)
        pio.write_events(out / "events.csv", sim.log)
        pio.write_paths(out / "path.csv", sim.paths)
        truth = network_truth(sim.models, sim.paths, sim.log)
        pio.write_json(out / "truth.json", pio.network_fit_document(truth, sim.log))
        prov.update(node_count=n, event_count=len(sim.log), path="path.csv")
    else:
        model = _config_model(config)
        path = None
        if kind == "poisson":
            seq = simulate_poisson(model.lam, horizon, rng)
        elif kind == "hawkes":
            seq = simulate_hawkes(model, horizon, rng)
        elif kind == "mmpp":
            seq, path = simulate_mmpp(model, horizon, rng)
        else:
            seq, path = simulate_mmhp(model, horizon, rng)
        pio.write_events(out / "events.csv", seq)
        if path is not None:
            pio.write_path(out / "path.csv", path)
            prov["path"] = "path.csv"
        pio.write_json(out / "truth.json", pio.model_document(model, horizon, path=path, label="true"))
        prov["event_count"] = len(seq)
    pio.write_json(out / "provenance.json", {"kind": "provenance", **prov})
    print(f"wrote {prov['event_count']} events to {out / 'events.csv'}")
    return EXIT_OK


# ---------------------------------------------------------------- shared input handling


def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _sidecar(events_path) -> dict:
    """Provenance written by ``simulate`` next to the events file, if any."""
    p = Path(events_path).with_name("provenance.json")
    if p.exists():
        doc = pio.read_json(p, "provenance")
        if doc.get("events") == Path(events_path).name:
            return doc
    return {}


def _load_events(events_path, horizon=None, node_count=None, jitter=False):
    side = _sidecar(events_path)
    if horizon is None:
        horizon = side.get("horizon")
    if horizon is None:
        raise UsageError(f"horizon of {events_path} unknown: pass --horizon or keep provenance.json beside it")
    if side.get("horizon") is not None and float(side["horizon"]) != float(horizon):
        raise CompatibilityError(f"--horizon {horizon} disagrees with provenance horizon {side['horizon']}")
    if node_count is None:
        node_count = side.get("node_count")
    return pio.read_events(events_path, float(horizon), node_count, jitter), side


def _parse_partition(text: str):
    try:
        return tuple(tuple(int(v) for v in block.split(",") if v.strip()) for block in text.split("/"))
    except ValueError:
        raise ValidationError(f"cannot parse partition {text!r}; use e.g. 1,2,3/4,5,6") from None


def _fit_options(args) -> FitOptions:
    return FitOptions(multistart_count=args.multistart, rng=RandomSource(args.seed), threads=args.threads)


def _error_entry(exc) -> dict:
    return {"type": type(exc).__name__, "message": str(exc), "exit_code": exit_code(exc)}


# ---------------------------------------------------------------- fit


def cmd_fit(args) -> int:
    data, side = _load_events(args.events, args.horizon, args.nodes, args.jitter_ties)
    out = _outdir(args.out)
    kinds = [k.strip() for k in args.models.split(",") if k.strip()]
    network = isinstance(data, NetworkEventLog)
    allowed = NETWORK if network else UNIVARIATE
    bad = [k for k in kinds if k not in allowed]
    if bad or not kinds:
        raise UsageError(f"models for {'network' if network else 'univariate'} data must be among {allowed}, got {kinds}")
    config = {
        "events": Path(args.events).name, "events_sha256": _sha256(args.events), "models": kinds,
        "seed": args.seed, "multistart": args.multistart, "horizon": data.horizon,
    }
    opts = _fit_options(args)
    results, worst = {}, EXIT_OK

    if network:
        partition = _parse_partition(args.partition) if args.partition else None
        if partition is None and side.get("config", {}).get("blocks"):
            partition = tuple(tuple(b) for b in side["config"]["blocks"])
        config.update(node_count=data.node_count, partition=[list(b) for b in partition] if partition else None)
        homog = None
        for kind in kinds:
            try:
                if kind == "block":
                    if partition is None:
                        raise UsageError("block model needs --partition")
                    nk = NetworkModelKind.block(partition).validate(data.node_count)
                else:
                    nk = NetworkModelKind(kind)
                fit = fit_network(data, nk, opts, warm_start=homog)
                if kind == "homogeneous":
                    homog = fit
                name = f"fit_{kind}.json"
                pio.write_json(out / name, pio.network_fit_document(fit, data))
                results[kind] = {"file": name, "loglik": fit.shared_loglik, "converged": fit.converged,
                                 "fallback_pairs": len(fit.fallback_pairs)}
            except (PPDiagError, ValueError) as exc:
                results[kind] = {"error": _error_entry(exc)}
                worst = worst or exit_code(exc)
                log.error("%s: %s", kind, exc)
    else:
        for kind in kinds:
            try:
                res = fit_model(kind, data, opts)
                name = f"model_{kind}.json"
                doc = pio.model_document(
                    res.model, data.horizon, res.loglik, res.path, label=kind, converged=res.converged,
                    iterations=res.iterations, start_index=res.start_index, degenerate=res.degenerate,
                )
                pio.write_json(out / name, doc)
                results[kind] = {"file": name, "loglik": res.loglik, "converged": res.converged,
                                 "params": doc["params"]}
            except (PPDiagError, ValueError) as exc:
                results[kind] = {"error": _error_entry(exc)}
                worst = worst or exit_code(exc)
                log.error("%s: %s", kind, exc)

    pio.write_json(out / "fit_report.json", {"kind": "fit_report", "provenance": _provenance("fit", config),
                                              "results": results})
    for kind, r in results.items():
        print(f"{kind:>14}: " + (f"loglik {r['loglik']:.6f}" if "loglik" in r else f"FAILED ({r['error']['message']})"))
    return worst


# ---------------------------------------------------------------- diagnose


def cmd_diagnose(args) -> int:
    docs = [pio.read_model_document(p) for p in args.model]
    horizons = {h for _, h, _, _ in docs}
    if len(horizons) != 1:
        raise CompatibilityError(f"model files disagree on the horizon: {sorted(horizons)}")
    horizon = horizons.pop()
    data, _ = _load_events(args.events, horizon, jitter=args.jitter_ties)
    if isinstance(data, NetworkEventLog):
        if not args.pair:
            raise UsageError("network events need --pair SENDER,RECEIVER")
        i, j = (int(v) for v in args.pair.split(","))
        seq = project_pair(data, PairIndex(i, j))
    else:
        seq = data
    if len(seq) == 0:
        raise ValidationError("diagnostics need at least one event")
    out = _outdir(args.out)
    grid = np.linspace(0.0, horizon, args.grid)
    config = {"events": Path(args.events).name, "events_sha256": _sha256(args.events),
              "models": [Path(p).name for p in args.model],
              "models_sha256": [_sha256(p) for p in args.model], "grid": args.grid, "pair": args.pair}

    summary, scatter, fits = {}, {}, {}
    used = set()
    for (model, _, path, doc), src in zip(docs, args.model):
        name = doc.get("label") or Path(src).stem
        while name in used:
            name += "_"
        used.add(name)
        if is_modulated(model) and path is None:
            raise CompatibilityError(f"{src}: modulated model file carries no latent path")
        if path is not None and len(seq) and path.horizon != seq.horizon:
            raise CompatibilityError(f"{src}: path horizon differs from the events horizon")
        rt = rescaled_times(model, seq, path)
        pio.write_rows(out / f"{name}_rescaled.csv", ["event", "rescaled"],
                       ([m + 1, float(v)] for m, v in enumerate(rt.values)))
        qq = qq_data(rt)
        pio.write_rows(out / f"{name}_qq.csv", ["theoretical", "empirical"], qq.points.tolist())
        svg.qq_plot(out / f"{name}_qq.svg", qq, f"Q-Q: {name}")
        lam = intensity_path(model, seq, path, grid)
        pio.write_rows(out / f"{name}_intensity.csv", ["t", "intensity"], zip(grid.tolist(), lam.tolist()))
        svg.line_plot(out / f"{name}_intensity.svg", grid, lam, f"intensity: {name}")
        counts, raw_t, pr_t = residual_trajectory(model, seq, path)
        scatter[name] = (counts, raw_t, pr_t)
        summary[name] = {
            "model": model.kind,
            "events": len(seq),
            "ks": ks_statistic(rt),
            "ks_pvalue": ks_pvalue(rt),
            "raw_residual": raw_residual(model, seq, path),
            "pearson_residual": pearson_residual(model, seq, path),
        }

    pio.write_rows(out / "residuals.csv", ["model", "event_count", "raw", "pearson"],
                   ([name, int(c), float(r), float(p)] for name, (cs, rs, ps) in scatter.items()
                    for c, r, p in zip(cs, rs, ps)))
    if len(scatter) > 1:
        for col, label in ((1, "raw"), (2, "pearson")):
            series = {n: (v[0], v[col]) for n, v in scatter.items()}
            fits = {n: lowess(x, y) for n, (x, y) in series.items() if len(x) >= 3 and np.ptp(x) > 0}
            rows = ([n, float(a), float(b)] for n, f in fits.items() for a, b in f)
            pio.write_rows(out / f"residuals_{label}_lowess.csv", ["model", "event_count", "smoothed"], rows)
            svg.scatter_lowess(out / f"residuals_{label}.svg", series, fits, f"{label} residual", ylabel=label)

    pio.write_json(out / "report.json", {"kind": "diagnose_report", "provenance": _provenance("diagnose", config),
                                          "models": summary})
    for name, s in summary.items():
        print(f"{name:>12}: KS {s['ks']:.4f}  raw {s['raw_residual']:+.3f}  pearson {s['pearson_residual']:+.3f}")
    return EXIT_OK


# ---------------------------------------------------------------- netdiag


def _read_order(path, n):
    with open(path, encoding="utf-8") as fh:
        text = fh.read().replace(",", " ").split()
    try:
        order = [int(v) for v in text]
    except ValueError:
        raise ValidationError(f"{path}: ordering must list integers") from None
    if sorted(order) != list(range(1, n + 1)):
        raise ValidationError(f"{path}: ordering must be a permutation of 1..{n}")
    return order


def cmd_netdiag(args) -> int:
    fits = [pio.read_network_fit_document(p) for p in args.fit]
    horizon = fits[0][1]["horizon"]
    n = fits[0][1]["node_count"]
    for _, doc in fits:
        if doc["horizon"] != horizon or doc["node_count"] != n:
            raise CompatibilityError("network fit files disagree on horizon or node count")
    data, _ = _load_events(args.events, horizon, n, args.jitter_ties)
    if not isinstance(data, NetworkEventLog):
        raise CompatibilityError("netdiag needs a time,sender,receiver events file")
    if args.k < 1 or args.k >= n:
        raise ValidationError(f"--k must satisfy 1 <= k < {n}")
    order = _read_order(args.order, n) if args.order else list(range(1, n + 1))
    out = _outdir(args.out)
    config = {"events": Path(args.events).name, "events_sha256": _sha256(args.events),
              "fits": [Path(p).name for p in args.fit], "fits_sha256": [_sha256(p) for p in args.fit],
              "k": args.k, "seed": args.seed, "order": order}
    nmf_opts = FitOptions(rng=RandomSource(args.seed))
    idx = np.asarray(order) - 1

    counts = np.ma.array(data.count_matrix().astype(float), mask=np.eye(n, dtype=bool))
    pio.write_matrix(out / "counts.csv", counts[np.ix_(idx, idx)], order)
    svg.heatmap(out / "counts.svg", counts[np.ix_(idx, idx)], "event counts", labels=order)

    scores, summary, used = {}, {}, set()
    for (fit, doc), src in zip(fits, args.fit):
        name = fit.label or Path(src).stem
        while name in used:
            name += "_"
        used.add(name)
        ks = ks_matrix(fit, data, threads=args.threads)
        pr = pearson_matrix(fit, data, threads=args.threads)
        pos, neg = split_residuals(pr)
        ks_d, pr_d = ks.reorder(order), pr.reorder(order)
        pio.write_matrix(out / f"ks_{name}.csv", ks_d, order)
        svg.heatmap(out / f"ks_{name}.svg", ks_d, f"K-S: {name}", labels=order)
        pio.write_matrix(out / f"pearson_{name}.csv", pr_d, order)
        svg.heatmap(out / f"pearson_{name}.svg", pr_d, f"Pearson residual: {name}", diverging=True, labels=order)
        pio.write_matrix(out / f"pr_pos_{name}.csv", pos[np.ix_(idx, idx)], order)
        pio.write_matrix(out / f"pr_neg_{name}.csv", neg[np.ix_(idx, idx)], order)
        scores[name] = (structure_score(pos, args.k, nmf_opts), structure_score(neg, args.k, nmf_opts))
        summary[name] = {
            "ks_mean": ks.mean(),
            "pearson_mean": pr.mean(),
            "masked_pairs": [str(p) for p in fit.per_pair_models if ks[p] is None],
            "failures": {str(p): why for p, why in {**ks.failures, **pr.failures}.items()},
            "structure_score_positive": scores[name][0],
            "structure_score_negative": scores[name][1],
        }

    names = list(scores)
    pio.write_rows(out / "structure_scores.csv", ["matrix"] + names,
                   [["positive"] + [scores[m][0] for m in names], ["negative"] + [scores[m][1] for m in names]])
    pio.write_json(out / "report.json", {"kind": "netdiag_report", "provenance": _provenance("netdiag", config),
                                          "fits": summary})
    print(f"{'':>10}" + "".join(f"{m:>16}" for m in names))
    print(f"{'positive':>10}" + "".join(f"{scores[m][0]:>16.4f}" for m in names))
    print(f"{'negative':>10}" + "".join(f"{scores[m][1]:>16.4f}" for m in names))
    return EXIT_OK


# ---------------------------------------------------------------- entry point


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ppdiag", description="Point-process model diagnostics.")
    parser.add_argument("--version", action="version", version=f"ppdiag {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate events from a config file")
    p.add_argument("--config", required=True, help=f"JSON config, or a bundled example: {', '.join(EXAMPLES)}")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    def add_common(p):
        p.add_argument("--events", required=True, help="events CSV")
        p.add_argument("--out", required=True)
        p.add_argument("--threads", type=int, default=1, help="worker threads for per-pair loops")
        p.add_argument("--jitter-ties", action="store_true",
                       help="separate tied times by k*1e-9 instead of rejecting the file")

    p = sub.add_parser("fit", help="fit models to an events file")
    add_common(p)
    p.add_argument("--models", default="poisson,hawkes,mmpp,mmhp",
                   help="comma-separated; univariate: poisson,hawkes,mmpp,mmhp; "
                        "network: homogeneous,block,heterogeneous")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--multistart", type=int, default=10)
    p.add_argument("--horizon", type=float, help="observation horizon T (default: from provenance.json)")
    p.add_argument("--nodes", type=int, help="node count for network files")
    p.add_argument("--partition", help="block partition, e.g. 1,2,3,4/5,6,7,8,9,10")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("diagnose", help="univariate goodness-of-fit report")
    add_common(p)
    p.add_argument("--model", required=True, nargs="+", help="model JSON file(s)")
    p.add_argument("--grid", type=int, default=1001, help="points in the intensity grid over [0, T]")
    p.add_argument("--pair", help="SENDER,RECEIVER when the events file is a network log")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("netdiag", help="network K-S and Pearson matrices with structure scores")
    add_common(p)
    p.add_argument("--fit", required=True, nargs="+", help="network fit JSON file(s)")
    p.add_argument("--k", type=int, default=2, help="NMF rank")
    p.add_argument("--order", help="file listing a display permutation of the node ids")
    p.add_argument("--seed", type=int, default=0, help="seed for NMF restarts")
    p.set_defaults(func=cmd_netdiag)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        if args.verbose:
            logging.getLogger().setLevel(logging.INFO)
        if getattr(args, "threads", 1) < 1:
            raise UsageError("--threads must be >= 1")
        return args.func(args)
    except (PPDiagError, ValueError, OSError) as exc:
        print(f"ppdiag: error: {exc}", file=sys.stderr)
        return exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
