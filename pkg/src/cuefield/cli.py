"""Command line experiment runner.

    cuefield <experiment> [--config PATH.json] [--seed U64] [--workers INT] [--out DIR]

The config file is experiment-keyed JSON ({"ballot": {...}, ...}); unknown
keys are rejected.  Results land in <out>/<experiment>.csv with a
<experiment>_manifest.json sidecar echoing the full configuration.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from .experiments import DEFAULT_PARAMS, ExperimentConfig, run_experiment


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cuefield",
        description="Experiment harness for the CUE field numerics library.",
    )
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in DEFAULT_PARAMS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", type=Path, default=None,
                       help="experiment-keyed JSON parameter file")
        p.add_argument("--seed", type=int, default=1, help="64-bit master seed")
        p.add_argument("--workers", type=int, default=1, help="worker processes")
        p.add_argument("--out", type=Path, default=Path("runs"), help="output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.config is not None:
        config = ExperimentConfig.from_json(args.config, args.experiment,
                                            args.seed, args.workers)
    else:
        config = ExperimentConfig(args.experiment, args.seed, args.workers)

    started = time.time()
    result = run_experiment(config)
    args.out.mkdir(parents=True, exist_ok=True)
    csv_path = args.out / f"{config.experiment}.csv"
    manifest_path = args.out / f"{config.experiment}_manifest.json"
    result.write_csv(csv_path)
    result.write_manifest(manifest_path)
    print(f"{config.experiment}: {len(result.rows)} rows in {time.time() - started:.1f}s")
    print(f"  wrote {csv_path}")
    print(f"  wrote {manifest_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
