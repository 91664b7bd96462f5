"""Command line: ``loopsoup <experiment> [--config FILE] [--seed S] [--out DIR] [--set key=value ...]``.

Exit status is 0 when every criterion of the experiment passes, 1 when one
fails and 2 for configuration errors.
"""

from __future__ import annotations

import argparse
import json
import sys

from .harness import EXPERIMENTS, ConfigError, ExperimentConfig, run


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="loopsoup", description="Loop-soup and interlacement experiments")
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", help="flat key = value configuration file")
    parser.add_argument("--seed", type=int, help="master seed (overrides the file)")
    parser.add_argument("--reps", type=int, help="replica count (overrides the file)")
    parser.add_argument("--out", default=None, help="output directory for CSV and JSON")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any configuration key; may be repeated")
    return parser


def load_config(args) -> ExperimentConfig:
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = ExperimentConfig.from_text(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read {args.config}: {exc}") from exc
        if cfg.experiment != args.experiment:
            raise ConfigError(f"config file is for {cfg.experiment!r}, not {args.experiment!r}")
    else:
        cfg = ExperimentConfig(args.experiment)
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.reps is not None:
        overrides["reps"] = args.reps
    return cfg.with_values(**overrides) if overrides else cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        cfg = load_config(args)
        record = run(cfg, args.out)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    for name, ok in record.criteria.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    print(json.dumps(record.summary, default=str))
    return 0 if record.passed else 1


if __name__ == "__main__":
    sys.exit(main())
