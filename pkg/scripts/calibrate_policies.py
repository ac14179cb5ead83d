#!/usr/bin/env python3
"""Find simulator alignment knobs that hit target true lifts.

Bisects the alignment of a shared-noise probe policy until its exact
counterfactual lift over the logging policy matches each target. Useful
when designing experiment configs with known ground-truth separation.

Usage:
    python3 scripts/calibrate_policies.py configs/default.yaml 30 10 -10
"""
import argparse
import sys

from auctionope.config import load_config
from auctionope.simulator import calibrate_alignment


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("config", help="experiment config YAML (simulation section used)")
    parser.add_argument("targets", nargs="+", type=float, help="target lifts in percent")
    parser.add_argument("--tol", type=float, default=0.25, help="lift tolerance in points")
    args = parser.parse_args()

    cfg = load_config(args.config)
    if cfg.simulation is None:
        print("config has no simulation section", file=sys.stderr)
        return 1
    for target in args.targets:
        alignment = calibrate_alignment(cfg.simulation, target, tol=args.tol)
        print(f"target {target:+7.2f}%  ->  alignment {alignment:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
