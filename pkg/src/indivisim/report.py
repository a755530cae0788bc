"""Deterministic JSON / CSV report writing."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile

import numpy as np

SWEEP_HEADER = ["m", "empirical_lower", "empirical_upper", "bound_measured", "bound_tid"]
LEDGER_HEADER = ["r", "parity", "gamma", "slice", "term", "ordinal", "part", "G", "N",
                 "N_estimate", "wilson_lower", "wilson_upper", "trials"]


def fmt_float(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    s = format(x, ".17g")
    if not any(c in s for c in ".en"):
        s += ".0"
    return s


def plain(obj):
    """Convert numpy scalars/arrays and complex numbers to JSON-native values."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def dumps(obj, indent: int = 2) -> str:
    def enc(o, level):
        pad = " " * (indent * (level + 1))
        end = " " * (indent * level)
        if o is None:
            return "null"
        if o is True:
            return "true"
        if o is False:
            return "false"
        if isinstance(o, int):
            return str(o)
        if isinstance(o, float):
            return fmt_float(o)
        if isinstance(o, str):
            return json.dumps(o)
        if isinstance(o, list):
            if not o:
                return "[]"
            if all(not isinstance(v, (list, dict)) for v in o):
                return "[" + ", ".join(enc(v, level + 1) for v in o) + "]"
            return "[\n" + ",\n".join(pad + enc(v, level + 1) for v in o) + "\n" + end + "]"
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [pad + json.dumps(k) + ": " + enc(v, level + 1) for k, v in o.items()]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        raise TypeError(f"cannot serialize {type(o).__name__}")

    return enc(plain(obj), 0) + "\n"


def _cell(v) -> str:
    if isinstance(v, float):
        return fmt_float(v)
    if v is None:
        return ""
    return str(v)


def _flatten(obj, prefix=""):
    if isinstance(obj, dict):
        for k, v in obj.items():
            yield from _flatten(v, f"{prefix}.{k}" if prefix else str(k))
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            yield from _flatten(v, f"{prefix}.{i}")
    else:
        yield prefix, obj


def to_csv(report: dict) -> str:
    """Flat table: sweep rows, circuit ledger rows, or key/value pairs."""
    report = plain(report)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if "sweep" in report:
        w.writerow(SWEEP_HEADER)
        for row in report["sweep"]:
            w.writerow([_cell(row[k]) for k in SWEEP_HEADER])
    elif "circuits" in report and isinstance(report["circuits"], list):
        w.writerow(LEDGER_HEADER)
        for c in report["circuits"]:
            for rec in c["ledger"]:
                wil = rec.get("wilson") or {}
                w.writerow([_cell(x) for x in (
                    c["r"], c["parity"], rec["gamma"], rec["slice"], rec["term"], rec["ordinal"],
                    rec["part"], rec["G"], rec["N"], wil.get("estimate"), wil.get("lower"),
                    wil.get("upper"), c["trials"])])
    else:
        w.writerow(["key", "value"])
        for k, v in _flatten(report):
            w.writerow([k, _cell(v)])
    return buf.getvalue()


def atomic_write(path: str, text: str) -> None:
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit_report(report: dict, fmt: str = "json", path: str | None = None) -> str:
    if fmt == "json":
        text = dumps(report)
    elif fmt == "csv":
        text = to_csv(report)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if path is not None:
        atomic_write(path, text)
    return text
