"""Run reports: one JSON document per run plus optional CSV tables.

Everything except the ``timing`` block is a deterministic function of the
config and seed, so two runs can be compared byte for byte after dropping
that block.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

SCHEMA_VERSION = "1.0"

_record_list = {"type": "array", "items": {"type": "object"}}

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "holoreg run report",
    "type": "object",
    "required": ["schema_version", "name", "command", "config", "log", "results", "traces", "scalings", "tables", "timing"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "command": {"enum": ["overlap", "simulate", "sweep"]},
        "status": {"enum": ["ok", "failed"]},
        "error": {"type": ["string", "null"]},
        "config": {"type": "object"},
        "log": _record_list,
        "results": {"type": "object"},
        "traces": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["x", "y"],
                "properties": {
                    "x": {"type": "array"},
                    "y": {"type": "array"},
                    "x_label": {"type": "string"},
                    "y_label": {"type": "string"},
                },
            },
        },
        "scalings": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "variable", "slope", "slope_stderr"],
                "properties": {"slope": {"type": "number"}, "slope_stderr": {"type": "number"}},
            },
        },
        "tables": {"type": "object", "additionalProperties": _record_list},
        "diagnostics": {"type": "object"},
        "notes": {"type": "array", "items": {"type": "string"}},
        "timing": {
            "type": "object",
            "required": ["wall_clock_s"],
            "properties": {"wall_clock_s": {"type": "number", "minimum": 0}},
        },
    },
}


@dataclass
class SimReport:
    name: str
    command: str
    config: dict
    log: list = field(default_factory=list)
    results: dict = field(default_factory=dict)
    traces: dict = field(default_factory=dict)
    scalings: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    status: str = "ok"
    error: str | None = None
    wall_clock_s: float = 0.0

    def add_trace(self, name, x, y, x_label="", y_label=""):
        self.traces[name] = {"x": list(np.asarray(x, dtype=float)), "y": list(np.asarray(y, dtype=float)), "x_label": x_label, "y_label": y_label}

    def to_dict(self) -> dict:
        d = {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "command": self.command,
            "status": self.status,
            "error": self.error,
            "config": self.config,
            "log": self.log,
            "results": self.results,
            "traces": self.traces,
            "scalings": self.scalings,
            "tables": self.tables,
            "diagnostics": self.diagnostics,
            "notes": self.notes,
            "timing": {"wall_clock_s": float(self.wall_clock_s)},
        }
        return clean(d)

    def to_json(self) -> str:
        return dumps(self.to_dict())


def clean(x):
    """Plain JSON types: numpy scalars unwrapped, complex as {re, im}, non-finite as strings."""
    if isinstance(x, dict):
        return {str(k): clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return clean(x.tolist())
    if isinstance(x, (complex, np.complexfloating)):
        return {"re": clean(float(x.real)), "im": clean(float(x.imag))}
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        v = float(x)
        return v if math.isfinite(v) else str(v)
    return x


def dumps(d: dict) -> str:
    return json.dumps(d, indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False) + "\n"


def validate_report(d: dict) -> None:
    """Raise jsonschema.ValidationError when ``d`` is not a valid report."""
    jsonschema.validate(d, REPORT_SCHEMA)


def strip_timing(d: dict) -> dict:
    return {k: v for k, v in d.items() if k != "timing"}


def tables_to_csv(tables: dict) -> dict:
    """{table name: CSV text}; columns are the union of record keys, sorted."""
    out = {}
    for name, rows in tables.items():
        cols = sorted({k for r in rows for k in r})
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _cell(r.get(k, "")) for k in cols})
        out[name] = buf.getvalue()
    return out


def _cell(v):
    if isinstance(v, dict) and set(v) == {"re", "im"}:
        return f"{v['re']!r}{v['im']:+}j"
    if isinstance(v, float):
        return repr(v)
    return v


def write_atomic(files: dict, out_dir) -> list:
    """Write {filename: text} into ``out_dir``; each file appears via rename or not at all."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    staged = []
    try:
        for name, text in files.items():
            fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=out_dir)
            staged.append((tmp, out_dir / name))
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
    except BaseException:
        for tmp, _ in staged:
            os.unlink(tmp)
        raise
    for tmp, final in staged:
        os.replace(tmp, final)
    return [final for _, final in staged]
