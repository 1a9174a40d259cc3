"""Persistence: per-run CSV time series, two-column plot data and one summary document."""
import json
import math
import os

from ..errors import CNLSError

CSV_COLUMNS = ("t", "M", "E", "K", "P", "Q", "G", "J", "Jprime", "dt")
SUMMARY_NAME = "summary.json"


class OutputError(CNLSError, OSError):
    """Writing results failed; the message names the path."""


def fmt(x) -> str:
    """Shortest round-trip decimal form (repr), so files reload losslessly."""
    return repr(float(x))


def run_rows(record):
    for i, t in enumerate(record.times):
        r = record.reports[i]
        yield (t, r.M, r.E, r.K, r.P, r.Q, r.G, record.J[i], record.Jprime[i], record.dts[i])


def csv_text(record) -> str:
    lines = [",".join(CSV_COLUMNS)]
    lines.extend(",".join(fmt(v) for v in row) for row in run_rows(record))
    return "\n".join(lines) + "\n"


def two_column_text(times, values) -> str:
    return "".join(f"{fmt(t)} {fmt(v)}\n" for t, v in zip(times, values))


def _safe_label(label: str) -> str:
    keep = "".join(ch if ch.isalnum() or ch in "-_.=" else "_" for ch in label)
    return keep.replace("=", "_")


def _json_default(obj):
    if hasattr(obj, "tolist"):
        return obj.tolist()
    raise TypeError(f"not serializable: {type(obj).__name__}")


def _clean(obj):
    """Replace non-finite floats by strings: JSON has no inf or nan."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def summary_text(summary: dict) -> str:
    return json.dumps(_clean(summary), sort_keys=True, indent=2, default=_json_default) + "\n"


def _write(path, text):
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc


def emit_outputs(runs, summary: dict, directory) -> list:
    """Write every run's files plus the summary; returns the written paths in order.

    ``runs`` is a list of objects with ``label`` and ``record`` attributes.
    """
    directory = os.fspath(directory)
    try:
        os.makedirs(directory, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create {directory}: {exc.strerror or exc}") from exc
    written = []
    files = {}
    for i, run in enumerate(runs):
        stem = f"run{i:03d}_{_safe_label(run.label)}"
        rec = run.record
        targets = {
            "csv": (stem + ".csv", csv_text(rec)),
            "J": (stem + ".J.dat", two_column_text(rec.times, rec.J)),
            "K": (stem + ".K.dat", two_column_text(rec.times, rec.series("K"))),
        }
        files[run.label] = {}
        for key, (name, text) in targets.items():
            path = os.path.join(directory, name)
            _write(path, text)
            written.append(path)
            files[run.label][key] = name
    doc = dict(summary)
    doc["files"] = files
    doc["run_count"] = len(runs)
    path = os.path.join(directory, SUMMARY_NAME)
    _write(path, summary_text(doc))
    written.append(path)
    return written


def read_csv(path):
    """Reload a time-series CSV as a dict of float lists keyed by column."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        cols = {h: [] for h in header}
        for line in fh:
            for h, v in zip(header, line.strip().split(",")):
                cols[h].append(float(v))
    return cols


__all__ = ["CSV_COLUMNS", "emit_outputs", "csv_text", "read_csv", "summary_text", "OutputError",
           "fmt"]
