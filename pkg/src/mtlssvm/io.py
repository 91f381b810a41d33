"""Dataset files, result documents and CSV tables.

Dataset format: UTF-8 CSV whose header is exactly ``task,class,f1,...,fp``;
task and class ids are 1-based integers and rows may come in any order.
Result documents are JSON objects with a ``schema_version`` field.  Floats
are written with Python's shortest round-trip representation.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
import yaml

from .core import MtlDataset
from .errors import BadSpecError, ParseError, SchemaError

SCHEMA_VERSION = "1.0"


def _header(p: int) -> list:
    return ["task", "class"] + [f"f{r + 1}" for r in range(p)]


def load_dataset(path) -> MtlDataset:
    """Read a dataset file; class blocks keep the file's row order."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", 1) from None
        header = [h.strip() for h in header]
        p = len(header) - 2
        if p < 1:
            raise SchemaError("need at least one feature column", header[-1] if header else None)
        for got, want in zip(header, _header(p)):
            if got != want:
                raise SchemaError(f"expected {want!r}", got)
        rows = {}
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != p + 2:
                raise ParseError(f"expected {p + 2} fields, got {len(row)}", line)
            try:
                t, c = int(row[0]), int(row[1])
            except ValueError:
                raise ParseError("task and class must be integers", line) from None
            if t < 1 or c < 1:
                raise ParseError("task and class ids are 1-based", line)
            try:
                x = np.array([float(v) for v in row[2:]])
            except ValueError:
                raise ParseError("non-numeric feature", line) from None
            if not np.all(np.isfinite(x)):
                raise ParseError("non-finite feature", line)
            rows.setdefault((t, c), []).append(x)
    if not rows:
        raise ParseError("no data rows", 2)
    k = max(t for t, _ in rows)
    m = max(c for _, c in rows)
    missing = [(t, c) for t in range(1, k + 1) for c in range(1, m + 1) if (t, c) not in rows]
    if missing:
        t, c = missing[0]
        raise SchemaError(f"task {t} has no rows of class {c}", "class")
    blocks = [[np.column_stack(rows[t, c]) for c in range(1, m + 1)] for t in range(1, k + 1)]
    return MtlDataset(blocks)


def save_dataset(dataset: MtlDataset, path) -> None:
    """Write the raw blocks of ``dataset`` task-major, class-minor."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_header(dataset.p))
        for i, row in enumerate(dataset.blocks):
            for j, block in enumerate(row):
                for col in block.T:
                    w.writerow([i + 1, j + 1] + [repr(float(v)) for v in col])


def to_plain(obj):
    """Recursively convert numpy containers and scalars to JSON-ready values."""
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_plain(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_result(path, doc: dict) -> dict:
    """Write a result document; returns the document actually written."""
    out = {"schema_version": SCHEMA_VERSION}
    out.update(to_plain(doc))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(out, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return out


def read_result(path) -> dict:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if "schema_version" not in doc:
        raise SchemaError("result document lacks a schema version", "schema_version")
    return doc


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_table(path, rows, columns=None) -> None:
    """Write a list of dicts as CSV with a header line."""
    rows = list(rows)
    if columns is None:
        columns = []
        for r in rows:
            columns += [c for c in r if c not in columns]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(r.get(c)) for c in columns])


def read_table(path) -> list:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def load_config(path) -> dict:
    """YAML (or JSON) experiment configuration."""
    try:
        doc = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        line = getattr(getattr(exc, "problem_mark", None), "line", None)
        raise ParseError(str(exc).splitlines()[0], None if line is None else line + 1) from None
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise BadSpecError("configuration must be a mapping")
    return doc
