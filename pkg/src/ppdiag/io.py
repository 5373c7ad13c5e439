"""File formats: events CSV, latent-path CSV, pair-matrix CSV and versioned JSON documents."""

from __future__ import annotations

import csv
import hashlib
import json
import math

import numpy as np

from .core import EventSequence, NetworkEventLog, PairIndex, jitter_ties
from .errors import CompatibilityError, ValidationError
from .models.params import LatentPath, model_from_dict, model_to_dict

__all__ = [
    "SCHEMA_VERSION",
    "NA",
    "format_float",
    "write_events",
    "read_events",
    "write_path",
    "write_paths",
    "write_matrix",
    "read_matrix",
    "write_rows",
    "write_json",
    "read_json",
    "config_hash",
    "model_document",
    "read_model_document",
    "network_fit_document",
    "read_network_fit_document",
]

SCHEMA_VERSION = 1
NA = "NA"


def format_float(x: float) -> str:
    """17 significant digits: enough to round-trip any double."""
    return format(float(x), ".17g")


def _open_write(path):
    return open(path, "w", encoding="utf-8", newline="")


def write_rows(path, header, rows) -> None:
    """Plain CSV with LF line endings; floats at full precision."""
    with _open_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])


def write_events(path, data) -> None:
    """Write an :class:`EventSequence` (``time``) or a network log (``time,sender,receiver``)."""
    if isinstance(data, NetworkEventLog):
        rows = zip(data.times.tolist(), data.senders.tolist(), data.receivers.tolist())
        write_rows(path, ["time", "sender", "receiver"], rows)
    else:
        write_rows(path, ["time"], ([t] for t in data.times.tolist()))


def read_events(path, horizon: float, node_count: int | None = None, jitter: bool = False):
    """Parse an events CSV.

    Returns an :class:`EventSequence` for a ``time``-only file and a
    :class:`NetworkEventLog` for ``time,sender,receiver``. Errors name the
    offending row (header is row 1). ``jitter`` separates tied times with
    :func:`~ppdiag.core.jitter_ties` instead of rejecting them.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        if header not in (["time"], ["time", "sender", "receiver"]):
            raise ValidationError(f"{path}: row 1: header must be 'time' or 'time,sender,receiver', got {header}")
        network = len(header) == 3
        times, senders, receivers = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValidationError(f"{path}: row {lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                t = float(row[0])
                if network:
                    s, r = int(row[1]), int(row[2])
            except ValueError:
                raise ValidationError(f"{path}: row {lineno}: cannot parse {row}") from None
            if not math.isfinite(t):
                raise ValidationError(f"{path}: row {lineno}: non-finite time")
            if times and t < times[-1]:
                raise ValidationError(f"{path}: row {lineno}: times must be sorted")
            times.append(t)
            if network:
                senders.append(s)
                receivers.append(r)
    if jitter and times:
        times = jitter_ties(times).tolist()
    if not network:
        try:
            return EventSequence(np.array(times), horizon)
        except ValidationError as exc:
            raise ValidationError(f"{path}: {exc}") from None
    if node_count is None:
        node_count = max(senders + receivers, default=2)
    try:
        return NetworkEventLog(node_count, np.array(times), np.array(senders, dtype=np.int64),
                               np.array(receivers, dtype=np.int64), horizon)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None


def write_path(path, latent: LatentPath, pair: PairIndex | None = None) -> None:
    """Latent path as segments ``start,end,state`` (optionally prefixed by the pair)."""
    write_paths(path, {pair: latent} if pair is not None else {None: latent})


def write_paths(path, paths: dict) -> None:
    network = any(k is not None for k in paths)
    header = (["sender", "receiver"] if network else []) + ["start", "end", "state"]
    rows = []
    for key in sorted(paths, key=lambda p: (p.sender, p.receiver) if p is not None else (0, 0)):
        prefix = [key.sender, key.receiver] if network else []
        rows.extend(prefix + [float(a), float(b), s] for a, b, s in paths[key].segments())
    write_rows(path, header, rows)


def write_matrix(path, matrix, labels=None) -> None:
    """Pair matrix CSV: first column is the sender, header lists receivers, masked cells are NA.

    ``labels`` names rows and columns in the order stored (default 1..N).
    """
    values = np.ma.asarray(getattr(matrix, "values", matrix))
    mask = np.ma.getmaskarray(values)
    n = values.shape[0]
    labels = list(range(1, n + 1)) if labels is None else [int(v) for v in labels]
    rows = []
    for i in range(n):
        rows.append([labels[i]] + [NA if mask[i, j] else float(values.data[i, j]) for j in range(n)])
    write_rows(path, ["sender"] + [str(v) for v in labels], rows)


def read_matrix(path) -> np.ma.MaskedArray:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    data = np.array([[np.nan if v == NA else float(v) for v in r[1:]] for r in rows])
    return np.ma.array(np.nan_to_num(data), mask=np.isnan(data))


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(config: dict) -> str:
    return hashlib.sha256(_canonical(config).encode("utf-8")).hexdigest()


def write_json(path, doc: dict) -> None:
    doc = {"schema_version": SCHEMA_VERSION, **doc}
    with _open_write(path) as fh:
        fh.write(json.dumps(doc, sort_keys=True, indent=2, allow_nan=False))
        fh.write("\n")


def read_json(path, kind: str | None = None) -> dict:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict) or doc.get("schema_version") != SCHEMA_VERSION:
        raise CompatibilityError(f"{path}: unsupported schema_version {doc.get('schema_version') if isinstance(doc, dict) else None}")
    if kind is not None and doc.get("kind") != kind:
        raise CompatibilityError(f"{path}: expected a '{kind}' document, got '{doc.get('kind')}'")
    return doc


def model_document(model, horizon: float, loglik: float | None = None, path: LatentPath | None = None, **extra) -> dict:
    doc = {"kind": "model", "horizon": float(horizon), **model_to_dict(model)}
    if loglik is not None:
        doc["loglik"] = float(loglik)
    if path is not None:
        doc["path"] = path.to_dict()
    doc.update(extra)
    return doc


def read_model_document(path):
    """Returns ``(model, horizon, latent path or None, raw document)``."""
    doc = read_json(path, "model")
    latent = LatentPath.from_dict(doc["path"]) if "path" in doc else None
    return model_from_dict(doc), float(doc["horizon"]), latent, doc


def network_fit_document(fit, log: NetworkEventLog) -> dict:
    pairs = []
    for pair in log.pairs():
        entry = {"sender": pair.sender, "receiver": pair.receiver, **model_to_dict(fit.model(pair))}
        p = fit.paths.get(pair)
        if p is not None:
            entry["path"] = p.to_dict()
        pairs.append(entry)
    return {
        "kind": "network_fit",
        "label": fit.label,
        "network_model": fit.kind.name if fit.kind is not None else "true",
        "partition": [list(b) for b in fit.kind.partition] if fit.kind is not None and fit.kind.partition else None,
        "node_count": log.node_count,
        "horizon": log.horizon,
        "loglik": fit.shared_loglik,
        "converged": fit.converged,
        "fallback_pairs": [[p.sender, p.receiver] for p in fit.fallback_pairs],
        "pairs": pairs,
    }


def read_network_fit_document(path):
    """Returns ``(NetworkFitResult, raw document)``."""
    from .fit import NetworkFitResult, NetworkModelKind

    doc = read_json(path, "network_fit")
    models, paths = {}, {}
    for entry in doc["pairs"]:
        pair = PairIndex(int(entry["sender"]), int(entry["receiver"]))
        models[pair] = model_from_dict(entry)
        if "path" in entry:
            paths[pair] = LatentPath.from_dict(entry["path"])
    name = doc.get("network_model")
    kind = None
    if name == "homogeneous":
        kind = NetworkModelKind.homogeneous()
    elif name == "block":
        kind = NetworkModelKind.block(tuple(tuple(b) for b in doc["partition"]))
    elif name == "heterogeneous":
        kind = NetworkModelKind.heterogeneous()
    fit = NetworkFitResult(kind, models, float(doc["loglik"]), paths=paths,
                           converged=bool(doc.get("converged", True)), label=doc.get("label", ""))
    return fit, doc
