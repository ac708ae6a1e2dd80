"""Command line entry point: ``zrp <experiment> [flags]``.

Exit codes: 0 success, 2 configuration error, 3 resource cap, 4 numerical
failure.  The worker count for Monte Carlo batches comes from ZRP_WORKERS.
"""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError, ZRPError
from .experiments import EXPERIMENTS, ExperimentConfig, default_config, run_experiment


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zrp",
        description="Desk-scale experiments for the mean-field Zero-Range process.",
        epilog="exit codes: 0 ok, 2 config error, 3 state-space cap, 4 numerical failure",
    )
    sub = parser.add_subparsers(dest="experiment", metavar="EXPERIMENT")
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", metavar="PATH", help="JSON configuration (schema zrp-experiment/1)")
        p.add_argument("--seed", type=int, metavar="U64", help="64-bit seed (overrides the config)")
        p.add_argument("--out", metavar="DIR", help="output directory (overrides the config)")
        p.add_argument("--paths", type=int, metavar="N", help="number of Monte Carlo paths")
        p.add_argument("--engine", choices=("c1", "c2", "gillespie"), help="simulation engine")
    return parser


def config_from_args(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.load(args.config)
        if cfg.experiment != args.experiment:
            raise ConfigError(f"configuration is for {cfg.experiment!r}, not {args.experiment!r}", ["experiment"])
    else:
        cfg = default_config(args.experiment)
    overrides = {k: getattr(args, k) for k in ("seed", "out", "paths", "engine") if getattr(args, k) is not None}
    return cfg.replace(**overrides) if overrides else cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.experiment is None:
        parser.print_usage(sys.stderr)
        print("zrp: error: an experiment name is required", file=sys.stderr)
        return 2
    try:
        cfg = config_from_args(args)
        bundle = run_experiment(cfg)
    except ConfigError as exc:
        fields = f" (fields: {', '.join(exc.fields)})" if exc.fields else ""
        print(f"zrp: configuration error: {exc}{fields}", file=sys.stderr)
        return exc.exit_code
    except ZRPError as exc:
        print(f"zrp: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"zrp: I/O error: {exc}", file=sys.stderr)
        return 1
    for name, path in bundle.files.items():
        print(f"{name}\t{path}")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
