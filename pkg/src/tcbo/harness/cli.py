"""Command line: ``tcbo run``, ``tcbo list-benchmarks`` and ``tcbo summarize``."""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import ConfigError, load_config
from .persist import write_jsonl, write_timing
from .registry import BENCHMARKS, run_id, run_replicate
from .summarize import summarize_dir

OUTPUT_ENV = "TCBO_OUTPUT"


def output_dir(cfg) -> Path:
    return Path(os.environ.get(OUTPUT_ENV) or cfg.output)


def run_one(cfg, seed: int, out: Path) -> Path:
    """Run one replicate and write its log and timing sidecar; partial logs survive errors."""
    path = out / f"{run_id(cfg, seed)}.jsonl"
    try:
        result = run_replicate(cfg, seed)
    except Exception as exc:
        partial = getattr(exc, "partial_records", None)
        if partial is not None:
            write_jsonl(path, partial)
        raise
    write_jsonl(path, result.records)
    write_timing(path, result.solve_ms)
    return path


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tcbo", description="Transition-constrained BO benchmarks")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run seeded replicates of a configured benchmark")
    run.add_argument("--config", required=True, help="INI file with [run] and [environment]")
    run.add_argument("--seed", type=int, help="first seed; replicates use consecutive seeds")
    run.add_argument("--replicates", type=int, help="number of seeded replicates")
    run.add_argument("--workers", type=int, help="worker processes for replicates")
    run.add_argument("--no-plot", action="store_true", help="skip the summary PNG")
    sub.add_parser("list-benchmarks", help="print the benchmark registry")
    summ = sub.add_parser("summarize", help="aggregate replicate logs into summary.csv")
    summ.add_argument("--input", required=True, help="directory of replicate JSONL logs")
    summ.add_argument("--no-plot", action="store_true", help="skip the summary PNG")
    return parser


def _cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
        overrides = {k: getattr(args, k) for k in ("seed", "replicates", "workers")
                     if getattr(args, k) is not None}
        cfg = dataclasses.replace(cfg, **overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    out = output_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    seeds = [cfg.seed + r for r in range(cfg.replicates)]
    if cfg.workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            paths = list(pool.map(run_one, [cfg] * len(seeds), seeds, [out] * len(seeds)))
    else:
        paths = [run_one(cfg, s, out) for s in seeds]
    for p in paths:
        print(p)
    print(summarize_dir(out, plot=not args.no_plot))
    return 0


def _cmd_list() -> int:
    width = max(len(n) for n in BENCHMARKS)
    for name, bench in BENCHMARKS.items():
        print(f"{name:<{width}}  {bench.kind:<10}  H={bench.horizon:<4} {bench.description}")
    return 0


def _cmd_summarize(args) -> int:
    try:
        print(summarize_dir(args.input, plot=not args.no_plot))
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "list-benchmarks":
        return _cmd_list()
    return _cmd_summarize(args)


if __name__ == "__main__":
    sys.exit(main())
