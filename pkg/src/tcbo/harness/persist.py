"""Result files: one JSON-lines log per replicate, a timing sidecar, and the summary CSV.

Wall-clock times live in ``*.timing.jsonl`` so that the step log itself is a
pure function of the configuration and seed.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, fields
from pathlib import Path

from ..planner import StepRecord

RECORD_FIELDS = tuple(f.name for f in fields(StepRecord))
SUMMARY_COLUMNS = ("step", "regret_median", "regret_q10", "regret_q90", "identified_rate",
                   "mean_solve_ms")
TIMING_SUFFIX = ".timing.jsonl"


def _plain(value):
    """JSON-safe python scalars and lists from numpy values."""
    if hasattr(value, "tolist"):
        return value.tolist()
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def record_to_dict(record) -> dict:
    raw = asdict(record) if not isinstance(record, dict) else record
    return {k: _plain(raw[k]) for k in RECORD_FIELDS}


def dumps_records(records) -> str:
    return "".join(json.dumps(record_to_dict(r)) + "\n" for r in records)


def write_jsonl(path, records) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dumps_records(records))
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
    return path


def read_jsonl(path) -> list:
    path = Path(path)
    try:
        with open(path) as fh:
            return [json.loads(line) for line in fh if line.strip()]
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror}") from exc


def timing_path(log_path) -> Path:
    log_path = Path(log_path)
    return log_path.with_name(log_path.name[:-len(".jsonl")] + TIMING_SUFFIX)


def write_timing(log_path, solve_ms) -> Path:
    path = timing_path(log_path)
    try:
        with open(path, "w") as fh:
            for i, ms in enumerate(solve_ms):
                fh.write(json.dumps({"step": i, "solve_ms": float(ms)}) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
    return path


def read_timing(log_path):
    path = timing_path(log_path)
    if not path.exists():
        return None
    return [row["solve_ms"] for row in read_jsonl(path)]


def log_paths(directory) -> list:
    """Replicate logs in ``directory`` (timing sidecars excluded), sorted by name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise OSError(f"cannot read {directory}: not a directory")
    return sorted(p for p in directory.glob("*.jsonl") if not p.name.endswith(TIMING_SUFFIX))


def write_summary_csv(path, rows) -> Path:
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(SUMMARY_COLUMNS)
            for row in rows:
                writer.writerow(["" if row[c] is None else row[c] for c in SUMMARY_COLUMNS])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
    return path


def read_summary_csv(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
