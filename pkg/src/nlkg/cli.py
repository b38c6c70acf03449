"""Command line entry point: ``nlkg <experiment> [--config PATH] [--out-dir DIR] [--override K=V ...]``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

from .config import EXPERIMENTS, ConfigError, parse_config
from .report import write_atomic

OUT_ENV = "NLKG_OUT_DIR"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nlkg", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="EXPERIMENT")
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", type=Path, help="INI file; missing keys take the defaults")
        p.add_argument("--out-dir", type=Path, help=f"output root (default ${OUT_ENV} or ./nlkg-out)")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="set section.key, e.g. run.dt=0.005 (repeatable)")
        p.add_argument("--print-config", action="store_true",
                       help="print the effective configuration and exit")
    return parser


def output_dir(root: Path | None, experiment: str) -> Path:
    if root is None:
        root = Path(os.environ.get(OUT_ENV) or "nlkg-out")
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S%fZ")
    return Path(root) / experiment / stamp


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(args.config, args.experiment, args.override)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.print_config:
        print(cfg.emit(), end="")
        return 0
    from .experiments import run_experiment

    out = output_dir(args.out_dir, args.experiment)
    try:
        report = run_experiment(args.experiment, cfg)
    except Exception as exc:  # surfaced with context, nonzero exit
        logging.getLogger("nlkg").exception("experiment %s failed", args.experiment)
        print(f"{args.experiment} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    report.write(out)
    write_atomic(out / "config.ini", cfg.emit())
    print(report.summary())
    print(f"results: {out}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    raise SystemExit(main())
