"""Experiment front door.

Subcommands:
    run SPEC        execute a sweep spec (one metrics CSV per cell + manifest)
    summarize DIR   per-configuration mean/std table from a finished sweep
    plot DIR        per-metric SVG charts from a finished sweep
    verify          run the oracle/property suite

Exit codes: 0 success, 1 configuration error, 2 cell failure,
3 verification failure.
"""

from __future__ import annotations

import argparse
import sys

from augflow import sweep as S
from augflow.configio import ConfigError, load_experiment_spec
from augflow.verify import run_verification


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="augflow",
        description="Flow-network training experiments on grid DAGs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a sweep spec")
    p_run.add_argument("spec", help="path to the experiment spec file")
    p_run.add_argument("--workers", type=int, default=1, help="parallel cells")
    p_run.add_argument("--cap", type=int, default=None,
                       help="override the spec's max cell count")

    p_sum = sub.add_parser("summarize", help="summarize a finished sweep")
    p_sum.add_argument("dir", help="sweep output directory")

    p_plot = sub.add_parser("plot", help="plot a finished sweep")
    p_plot.add_argument("dir", help="sweep output directory")

    sub.add_parser("verify", help="run the oracle/property suite")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        try:
            spec = load_experiment_spec(args.spec)
            code = S.run_sweep(spec, workers=args.workers, cap=args.cap)
        except (ConfigError, ValueError, FileNotFoundError) as e:
            print(f"error: {e}", file=sys.stderr)
            return 1
        if code != 0:
            print("error: one or more cells failed (see manifest.txt)", file=sys.stderr)
        return code
    if args.command == "summarize":
        try:
            csv_path, txt_path = S.write_summary(args.dir)
        except (FileNotFoundError, ValueError) as e:
            print(f"error: {e}", file=sys.stderr)
            return 1
        print(txt_path.read_text(), end="")
        print(f"wrote {csv_path} and {txt_path}")
        return 0
    if args.command == "plot":
        try:
            paths = S.plot(args.dir)
        except (FileNotFoundError, ValueError) as e:
            print(f"error: {e}", file=sys.stderr)
            return 1
        for p in paths:
            print(f"wrote {p}")
        return 0
    if args.command == "verify":
        return 0 if run_verification() else 3
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
