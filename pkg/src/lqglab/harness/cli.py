"""Command line entry point: ``lqglab run|summarize|validate``.

Exit codes: 0 success, 2 config error, 3 at least one sample failed.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..lattice import GeometryError
from .config import ConfigError, load_config
from .runner import OUT_DIR_ENV, atomic_write, resolve_out_dir, run, write_report
from .summary import SummaryError, rows_to_csv, summarize

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PARTIAL = 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lqglab", description="Seeded LQG / LFPP lattice experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--seed", type=int, help="override base_seed")
    r.add_argument("--workers", type=int, default=1, help="worker processes (output does not depend on this)")
    r.add_argument("--out-dir", help=f"output directory (default: config output.dir, ${OUT_DIR_ENV}, ./lqglab-out)")
    r.add_argument("--format", choices=["json", "csv"], default="json", help="also write a CSV of rows with csv")

    s = sub.add_parser("summarize", help="aggregate reports of one kind into a table")
    s.add_argument("reports", nargs="+")
    s.add_argument("--out-dir", help="write summary there instead of stdout")
    s.add_argument("--format", choices=["json", "csv"], default="csv")

    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("config")
    v.add_argument("--seed", type=int)
    return p


def _config_error(exc) -> int:
    problems = getattr(exc, "problems", [str(exc)])
    for msg in problems:
        print(f"config error: {msg}", file=sys.stderr)
    return EXIT_CONFIG


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        return _config_error(exc)
    if args.seed is not None:
        if args.seed < 0:
            return _config_error(ConfigError(["--seed: must be nonnegative"]))
        cfg.base_seed = args.seed
    try:
        report = run(cfg, workers=max(1, args.workers))
    except GeometryError as exc:
        return _config_error(ConfigError([f"geometry: {exc}"]))
    paths = write_report(report, resolve_out_dir(args.out_dir, cfg), args.format)
    for k, pth in paths.items():
        print(f"{k}: {pth}")
    if report.failures:
        print(f"{len(report.failures)} of {len(report.records)} samples failed", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_summarize(args) -> int:
    try:
        rows = summarize([Path(p) for p in args.reports])
    except (SummaryError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"summarize error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    text = rows_to_csv(rows) if args.format == "csv" else json.dumps(rows, indent=2, sort_keys=True) + "\n"
    if args.out_dir:
        out = Path(args.out_dir) / f"summary.{args.format}"
        atomic_write(out, text)
        print(f"summary: {out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.base_seed = args.seed
        from .experiments import check_geometry

        check_geometry(cfg)
    except ConfigError as exc:
        return _config_error(exc)
    except GeometryError as exc:
        return _config_error(ConfigError([f"geometry: {exc}"]))
    print(f"ok: {cfg.kind} '{cfg.name}', {cfg.sample_count} samples from seed {cfg.base_seed}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    return {"run": cmd_run, "summarize": cmd_summarize, "validate": cmd_validate}[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
