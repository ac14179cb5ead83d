#!/usr/bin/env python3
"""Reproduce the binning and estimator ablation tables for one config.

Runs the simulate stage if its artifacts are missing, then grids over
binning strategies and estimators against the exact ground truth.

Usage:
    python3 scripts/run_ablations.py configs/default.yaml
"""
import argparse
import sys
from pathlib import Path

from auctionope import pipeline
from auctionope.config import load_config


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("config", help="experiment config YAML")
    parser.add_argument("--bins", default="100,1000,10000,adaptive")
    parser.add_argument("--estimators", default="ips,snips,capped_snips")
    args = parser.parse_args()

    cfg = load_config(args.config)
    out = Path(cfg.output_dir)
    if not (out / pipeline.LOG_CSV).exists():
        pipeline.run_simulate(cfg)

    print("== binning ablation ==")
    print(pipeline.run_ablate_bins(cfg, args.bins.split(",")).to_string(index=False))
    print()
    print("== estimator ablation ==")
    print(pipeline.run_ablate_estimators(cfg, args.estimators.split(",")).to_string(index=False))
    return 0


if __name__ == "__main__":
    sys.exit(main())
