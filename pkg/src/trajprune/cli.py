"""Command-line interface: run, sweep, report."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .harness import expand_sweep, load_config, run_experiment, sweep
from .report import (
    aggregate_runs,
    build_gap_table,
    hard_vs_noisy_export,
    write_aggregate,
    write_gap_table,
    write_hard_vs_noisy,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trajprune",
        description="Dynamic data pruning with loss-trajectory alignment scoring.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one run config (all its seeds)")
    p_run.add_argument("--config", required=True, help="path to a JSON run config")
    p_run.add_argument("--seed", type=int, default=None, help="override the config's seed list")
    p_run.add_argument("--output-dir", default=None, help="where run files go (default: config output_dir or ./runs)")
    p_run.add_argument("--dump-trajectories", action="store_true", help="write per-epoch per-sample losses")
    p_run.add_argument("--dump-das", action="store_true", help="write per-epoch alignment scores")

    p_sweep = sub.add_parser("sweep", help="execute a sweep config and aggregate")
    p_sweep.add_argument("--config", required=True, help="path to a JSON sweep config")
    p_sweep.add_argument("--output-dir", default=None)
    p_sweep.add_argument("--dump-trajectories", action="store_true")
    p_sweep.add_argument("--dump-das", action="store_true")

    p_report = sub.add_parser("report", help="aggregate run files into CSV tables")
    p_report.add_argument("--input", required=True, help="directory of run files")
    p_report.add_argument("--out", required=True, help="output CSV path")
    p_report.add_argument("--gap-table", action="store_true", help="emit gaps vs the full-training baseline")
    p_report.add_argument("--full-input", default=None, help="separate directory holding the full-training runs")
    p_report.add_argument("--hard-vs-noisy", action="store_true", help="emit the hard-clean vs flipped series")
    p_report.add_argument("--top-percent", type=float, default=10.0, help="hard-clean group size (%% of clean samples)")
    p_report.add_argument("--run", default=None, help="run id whose dumps to analyze")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        return _cmd_report(args)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _cmd_run(args) -> int:
    config = load_config(args.config)
    output_dir = args.output_dir or config.output_dir or "runs"
    seeds = [args.seed] if args.seed is not None else None
    summaries = run_experiment(
        config, output_dir, seeds, args.dump_trajectories, args.dump_das
    )
    return 0 if all(s["status"] == "ok" for s in summaries) else 1


def _cmd_sweep(args) -> int:
    with Path(args.config).open() as fh:
        raw = json.load(fh)
    configs = expand_sweep(raw)
    output_dir = args.output_dir or raw.get("output_dir") or "runs"
    summaries = sweep(configs, output_dir, args.dump_trajectories, args.dump_das)
    ok = sum(1 for s in summaries if s["status"] == "ok")
    print(f"[sweep] {ok}/{len(summaries)} runs ok; aggregate under {output_dir}")
    return 0 if ok == len(summaries) else 1


def _cmd_report(args) -> int:
    out = Path(args.out)
    if args.hard_vs_noisy:
        rows = hard_vs_noisy_export(args.input, args.run, args.top_percent)
        write_hard_vs_noisy(rows, out)
        print(f"[report] hard-vs-noisy series ({len(rows)} rows) -> {out}")
        return 0
    rows = aggregate_runs(args.input)
    if args.gap_table:
        full_rows = aggregate_runs(args.full_input) if args.full_input else None
        gap_rows = build_gap_table(rows, full_rows)
        write_gap_table(gap_rows, out)
        print(f"[report] gap table ({len(gap_rows)} rows) -> {out}")
        return 0
    write_aggregate(rows, out, out.with_suffix(".jsonl"))
    print(f"[report] aggregate ({len(rows)} rows) -> {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
