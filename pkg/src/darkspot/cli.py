"""Command line entry point: one subcommand per pipeline stage.

Exit codes: 0 on success, 2 on configuration/validation errors, 1 on
runtime failures (missing inputs, hash mismatches, IO errors).
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, load_config
from .pipeline import STAGES, RunError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="darkspot",
        description="Dark-spot segmentation pipeline: synthetic scenes, speckle "
                    "filtering, superpixel graphs, feature selection, GCN "
                    "classification, and pixel-level evaluation.",
    )
    sub = parser.add_subparsers(dest="stage", required=True)
    for name in STAGES:
        p = sub.add_parser(name, help=f"run the {name} stage")
        p.add_argument("--config", required=True, help="pipeline config file (key = value lines)")
        p.add_argument("--run-dir", required=True, help="run directory for cached stage artifacts")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--workers", type=int, default=None, help="override the config worker count")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.workers is not None:
            cfg.workers = args.workers
        cfg.validate()
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    try:
        STAGES[args.stage](cfg, args.run_dir)
    except RunError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
