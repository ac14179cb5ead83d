#!/usr/bin/env python3
"""Run the full simulate -> evaluate -> report pipeline for one config.

Usage:
    python3 scripts/run_experiment.py configs/default.yaml [--seed N]
"""
import argparse
import sys
from pathlib import Path

from auctionope.cli import main as cli_main


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("config", help="experiment config YAML")
    parser.add_argument("--seed", type=int, help="override simulation.seed")
    parser.add_argument("--output-dir", help="override output_dir")
    args = parser.parse_args()

    common = ["-c", args.config]
    if args.seed is not None:
        common += ["--seed", str(args.seed)]
    if args.output_dir:
        common += ["--output-dir", args.output_dir]

    for stage in ("simulate", "evaluate", "report"):
        code = cli_main([stage, *common])
        if code != 0:
            print(f"{stage} failed with exit code {code}", file=sys.stderr)
            return code
    print(f"done; artifacts under {args.output_dir or 'the configured output_dir'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
