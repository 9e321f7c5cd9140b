"""Per-step aggregation across replicates: regret quantiles and identification rate."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .persist import log_paths, read_jsonl, read_timing, write_summary_csv

SUMMARY_NAME = "summary.csv"
PLOT_NAME = "summary.png"


def linear_quantile(values, q: float) -> float:
    """Type-7 quantile written as ``v[lo] + (v[hi] - v[lo]) * frac``.

    numpy's lerp is algebraically equal but rounds differently in the last bit;
    this form is the one a plain re-implementation reproduces exactly.
    """
    v = np.sort(np.asarray(values, dtype=float))
    pos = q * (len(v) - 1)
    lo = int(np.floor(pos))
    hi = min(lo + 1, len(v) - 1)
    return float(v[lo] + (v[hi] - v[lo]) * (pos - lo))


def summary_rows(runs, timings=None) -> list:
    """One row per step index over the replicates that reached it.

    ``runs`` is a list of record lists (dicts); ``timings`` an optional parallel
    list of solve-time lists (entries may be None).
    """
    n_steps = max((len(r) for r in runs), default=0)
    rows = []
    for i in range(n_steps):
        at = [r[i] for r in runs if len(r) > i]
        regret = np.array([rec["regret"] for rec in at], dtype=float)
        ident = [rec["identified"] for rec in at if rec["identified"] is not None]
        ms = [t[i] for t in (timings or []) if t is not None and len(t) > i]
        q10, med, q90 = (linear_quantile(regret, q) for q in (0.1, 0.5, 0.9))
        rows.append({
            "step": i,
            "regret_median": med,
            "regret_q10": q10,
            "regret_q90": q90,
            "identified_rate": float(np.mean(ident)) if ident else None,
            "mean_solve_ms": float(np.mean(ms)) if ms else None,
        })
    return rows


def load_runs(directory):
    paths = log_paths(directory)
    runs = [read_jsonl(p) for p in paths]
    timings = [read_timing(p) for p in paths]
    return runs, timings


def plot_summary(rows, path, title: str = "") -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    steps = np.array([r["step"] for r in rows])
    med = np.array([r["regret_median"] for r in rows])
    lo = np.array([r["regret_q10"] for r in rows])
    hi = np.array([r["regret_q90"] for r in rows])
    ident = np.array([np.nan if r["identified_rate"] is None else r["identified_rate"]
                      for r in rows])
    has_ident = np.any(np.isfinite(ident))
    fig, axes = plt.subplots(1, 2 if has_ident else 1, figsize=(10 if has_ident else 5.5, 4),
                             squeeze=False)
    ax = axes[0, 0]
    ax.fill_between(steps, lo, hi, alpha=0.25, label="10-90% quantiles")
    ax.plot(steps, med, label="median")
    ax.set_xlabel("step")
    ax.set_ylabel("inference regret")
    ax.legend()
    if has_ident:
        ax = axes[0, 1]
        ax.plot(steps, ident)
        ax.set_ylim(-0.02, 1.02)
        ax.set_xlabel("step")
        ax.set_ylabel("identification rate")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def summarize_dir(directory, plot: bool = True) -> Path:
    """Write ``summary.csv`` (and ``summary.png``) into ``directory``; returns the CSV path."""
    directory = Path(directory)
    runs, timings = load_runs(directory)
    rows = summary_rows(runs, timings)
    out = write_summary_csv(directory / SUMMARY_NAME, rows)
    if plot and rows:
        plot_summary(rows, directory / PLOT_NAME, directory.name)
    return out
