"""Command-line entry point: simulate / evaluate / report / ablate.

Every flag overrides the corresponding config key; `--set a.b=c` covers
the rest. Exit codes: 0 success, 1 validation failure, 2 invariant-check
failure, 3 I/O error. Set AUCTIONOPE_LOG=debug|info|warning for verbosity.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import yaml

from . import pipeline
from .config import apply_override, config_from_dict
from .errors import (
    AuctionOpeError,
    ConfigurationError,
    DatasetEmptyError,
    InvariantError,
    MissingArtifactError,
    ModeMismatchError,
    SchemaError,
)

log = logging.getLogger("auctionope")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_INVARIANT = 2
EXIT_IO = 3


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("-c", "--config", required=True, help="experiment config YAML")
    parser.add_argument("--output-dir", help="override output_dir")
    parser.add_argument("--seed", type=int, help="override simulation.seed")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override any config key, e.g. --set dpm.aps_floor=1e-5",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="auctionope",
        description="Off-policy evaluation over deterministic auction logs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    _add_common(sub.add_parser("simulate", help="generate a logged dataset + ground truth"))
    _add_common(sub.add_parser("evaluate", help="fit models and compute estimates/metrics"))
    _add_common(sub.add_parser("report", help="emit daily-trend data and a summary"))
    ab = sub.add_parser("ablate", help="grid presets over bins or estimators")
    _add_common(ab)
    ab.add_argument("--bins", help="comma list, e.g. 100,1000,10000,adaptive")
    ab.add_argument("--estimators", help="comma list, e.g. ips,snips,capped_snips")
    return parser


def _load(args: argparse.Namespace):
    path = Path(args.config)
    if not path.exists():
        raise MissingArtifactError(f"config file {path} not found")
    doc = yaml.safe_load(path.read_text())
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{path} is not a mapping")
    if args.output_dir:
        doc["output_dir"] = args.output_dir
    if args.seed is not None:
        doc.setdefault("simulation", {})["seed"] = args.seed
    for item in args.overrides:
        if "=" not in item:
            raise ConfigurationError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        apply_override(doc, key, value)
    return config_from_dict(doc)


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=getattr(logging, os.environ.get("AUCTIONOPE_LOG", "WARNING").upper(), logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        if args.command == "simulate":
            out = pipeline.run_simulate(cfg)
            log.info("simulation artifacts written to %s", out)
        elif args.command == "evaluate":
            out = pipeline.run_evaluate(cfg)
            log.info("evaluation artifacts written to %s", out)
        elif args.command == "report":
            out = pipeline.run_report(cfg)
            log.info("report written to %s", out)
        else:  # ablate
            if not args.bins and not args.estimators:
                raise ConfigurationError("ablate needs --bins and/or --estimators")
            if args.bins:
                frame = pipeline.run_ablate_bins(cfg, args.bins.split(","))
                print(frame.to_string(index=False))
            if args.estimators:
                frame = pipeline.run_ablate_estimators(cfg, args.estimators.split(","))
                print(frame.to_string(index=False))
    except InvariantError as exc:
        print(f"invariant check failed: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (MissingArtifactError, FileNotFoundError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigurationError, SchemaError, DatasetEmptyError, ModeMismatchError,
            AuctionOpeError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
