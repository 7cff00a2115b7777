"""Command-line entry point.

Exit codes: 0 success, 1 stage failure, 2 invalid configuration. Diagnostics
go to stderr as a single machine-parsable `error: ...` line; data files only
ever go to the output directory.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Optional, Sequence

from . import __version__, pipeline
from .config import load_config
from .errors import ConfigError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="commutekit",
        description="Infer home/work anchors from location pings and report commuter behavior.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="stage", required=True, metavar="STAGE")
    descriptions = {
        "synth": "generate a synthetic ping corpus with planted ground truth",
        "ingest": "parse, filter, and select the analysis cohort",
        "cluster": "infer home/work anchors and per-window presence",
        "geocode": "resolve work anchors to workplace names",
        "categorize": "assign industry categories to workplace names",
        "report": "emit the report bundle (CSV, GeoJSON, JSON)",
        "pipeline": "run every stage in order",
    }
    for name, helptext in descriptions.items():
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--config", "-c", required=True, help="path to the JSON run config")
        sp.add_argument("--out", help="output directory (overrides config out_dir)")
        sp.add_argument("--workers", type=int, help="cross-user parallelism (overrides config)")
        sp.add_argument("--seed", type=int, help="corpus seed (overrides config)")
        sp.add_argument(
            "--verbose", "-v", action="store_true", help="log progress details to stderr"
        )
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = load_config(args.config, out_dir=args.out, workers=args.workers, seed=args.seed)
        summary = pipeline.STAGES[args.stage](cfg)
    except ConfigError as exc:
        print(f"error: {_one_line(exc)}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - stage failures become exit code 1
        print(f"error: {args.stage}: {_one_line(exc)}", file=sys.stderr)
        return 1
    if args.verbose:
        print(json.dumps(summary, sort_keys=True, default=str), file=sys.stderr)
    return 0


def _one_line(exc: Exception) -> str:
    return " ".join(str(exc).split()) or type(exc).__name__


if __name__ == "__main__":
    sys.exit(main())
