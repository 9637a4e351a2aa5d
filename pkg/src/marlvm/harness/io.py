"""File formats.

* dense CSV: header ``label,f0,f1,...``, one row per point;
* sparse documents: ``label<TAB>wordid:count[ wordid:count...]`` per line
  (an empty label or ``-`` means unlabeled);
* model files: JSON with shape metadata and row-major arrays written with
  17 significant digits, so values round-trip exactly;
* metrics: JSON object or ``key,value`` CSV lines.
"""

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from marlvm.errors import InvalidArgumentError, ParseError
from marlvm.rbm import DocBatch

MODEL_FORMAT = "marlvm-model"


@dataclass
class DenseDataset:
    X: np.ndarray
    labels: np.ndarray
    feature_names: list = None

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.shape != (self.X.shape[0],):
            raise InvalidArgumentError("one label per row required")
        if np.any(self.labels < 0):
            raise InvalidArgumentError("labels must be non-negative")
        if self.feature_names is None:
            self.feature_names = [f"f{i}" for i in range(self.X.shape[1])]

    def __len__(self):
        return len(self.labels)


def load_dense_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError("empty file", path=path)
    header = [h.strip() for h in rows[0]]
    if len(header) < 2 or header[0] != "label":
        raise ParseError("header must be 'label,f0,...'", line=1, path=path)
    X, y = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} columns, found {len(row)}", line=lineno, path=path)
        try:
            label = int(row[0])
        except ValueError:
            raise ParseError(f"column 1: label {row[0]!r} is not an integer", line=lineno, path=path) from None
        if label < 0:
            raise ParseError("column 1: label must be non-negative", line=lineno, path=path)
        values = []
        for col, cell in enumerate(row[1:], start=2):
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"column {col}: {cell!r} is not a number", line=lineno, path=path) from None
            if not math.isfinite(v):
                raise ParseError(f"column {col}: non-finite value", line=lineno, path=path)
            values.append(v)
        X.append(values)
        y.append(label)
    if not X:
        raise ParseError("no data rows", path=path)
    return DenseDataset(np.array(X), np.array(y), header[1:])


def save_dense_csv(path, data):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", *data.feature_names])
        for label, row in zip(data.labels, data.X):
            w.writerow([int(label), *(repr(float(v)) for v in row)])


def parse_doc_line(line, vocab_size=None, lineno=None, path=None):
    """Parse one sparse document line into ``(label, {word: count})``."""
    if "\t" not in line:
        raise ParseError("expected 'label<TAB>wordid:count ...'", line=lineno, path=path)
    label_s, body = line.split("\t", 1)
    label_s = label_s.strip()
    if label_s in ("", "-"):
        label = -1
    else:
        try:
            label = int(label_s)
        except ValueError:
            raise ParseError(f"label {label_s!r} is not an integer", line=lineno, path=path) from None
    counts = {}
    for tok in body.split():
        wid_s, sep, cnt_s = tok.partition(":")
        if not sep:
            raise ParseError(f"token {tok!r} is not 'wordid:count'", line=lineno, path=path)
        try:
            wid, cnt = int(wid_s), int(cnt_s)
        except ValueError:
            raise ParseError(f"token {tok!r} is not 'wordid:count'", line=lineno, path=path) from None
        if wid < 0 or (vocab_size is not None and wid >= vocab_size):
            raise ParseError(f"word id {wid} out of range", line=lineno, path=path)
        if cnt < 0:
            raise ParseError(f"negative count for word {wid}", line=lineno, path=path)
        counts[wid] = counts.get(wid, 0) + cnt
    if sum(counts.values()) < 1:
        raise ParseError("document has no tokens", line=lineno, path=path)
    return label, counts


def load_sparse_docs(path, vocab_size=None):
    parsed = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            parsed.append(parse_doc_line(line, vocab_size, lineno, path))
    if not parsed:
        raise ParseError("no documents", path=path)
    J = vocab_size if vocab_size is not None else 1 + max(max(c) for _, c in parsed)
    counts = np.zeros((len(parsed), J), dtype=np.int64)
    for row, (_, c) in enumerate(parsed):
        for wid, n in c.items():
            counts[row, wid] = n
    return DocBatch(counts, np.array([lbl for lbl, _ in parsed]), J)


def save_sparse_docs(path, batch):
    with open(path, "w") as fh:
        for label, row in zip(batch.labels, batch.counts):
            nz = np.flatnonzero(row)
            body = " ".join(f"{int(j)}:{int(row[j])}" for j in nz)
            fh.write(f"{'' if label < 0 else int(label)}\t{body}\n")


def _fmt(v):
    return format(float(v), ".17g")


def dumps_model(kind, arrays, meta=None):
    """Serialize named arrays (plus JSON-able metadata) to model-file text."""
    parts = []
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise InvalidArgumentError(f"array {name!r} has non-finite entries")
        data = ", ".join(_fmt(v) for v in arr.ravel(order="C"))
        parts.append(f'    {json.dumps(name)}: {{"shape": {json.dumps(list(arr.shape))}, "data": [{data}]}}')
    return (
        "{\n"
        f'  "format": {json.dumps(MODEL_FORMAT)},\n'
        '  "version": 1,\n'
        f'  "kind": {json.dumps(kind)},\n'
        f'  "meta": {json.dumps(meta or {}, sort_keys=True)},\n'
        '  "arrays": {\n' + ",\n".join(parts) + "\n  }\n}\n"
    )


def loads_model(text, path=None):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid model file: {exc.msg}", line=exc.lineno, path=path) from None
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ParseError("not a marlvm model file", path=path)
    arrays = {}
    for name, spec in doc.get("arrays", {}).items():
        shape = tuple(spec["shape"])
        data = np.asarray(spec["data"], dtype=float)
        if data.size != int(np.prod(shape)):
            raise ParseError(f"array {name!r}: {data.size} values for shape {shape}", path=path)
        arrays[name] = data.reshape(shape)
    return doc["kind"], arrays, doc.get("meta", {})


def save_model(path, kind, arrays, meta=None):
    with open(path, "w") as fh:
        fh.write(dumps_model(kind, arrays, meta))


def load_model(path):
    with open(path) as fh:
        return loads_model(fh.read(), path=path)


UNIT_METRICS = {"precision_at_k", "average_precision", "clustering_accuracy", "nmi", "knn_accuracy", "accuracy"}


def config_hash(config):
    """Short digest of a JSON-able configuration (keys sorted)."""
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class MetricsReport:
    """Named scalar results plus run metadata (seed, config hash, ...)."""

    metrics: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def add(self, name, value):
        value = float(value)
        if not math.isfinite(value):
            raise InvalidArgumentError(f"metric {name!r} is not finite")
        if name.rsplit(".", 1)[-1] in UNIT_METRICS and not 0.0 <= value <= 1.0:
            raise InvalidArgumentError(f"metric {name!r}={value} outside [0, 1]")
        if name.rsplit(".", 1)[-1] == "perplexity" and value < 1.0:
            raise InvalidArgumentError(f"perplexity {value} below 1")
        self.metrics[name] = value

    def flat(self):
        out = {f"meta.{k}": v for k, v in self.meta.items()}
        out.update(self.metrics)
        return out


def format_metrics(metrics, fmt="json"):
    if isinstance(metrics, MetricsReport):
        metrics = metrics.flat()
    if fmt == "json":
        return json.dumps(metrics, indent=2, sort_keys=True) + "\n"
    if fmt == "csv":
        return "".join(f"{k},{v}\n" for k, v in sorted(metrics.items()))
    raise InvalidArgumentError(f"unknown format {fmt!r}")
