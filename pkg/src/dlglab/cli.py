"""Command-line entry point.

Subcommands
-----------
``mixing``                 run the sampler-vs-baseline mixing study
``benchmark-integrators``  sweep integrators over budgets and start levels
``ablation``               sweep step scale × denoise fraction × budget
``train-classifier``       fit and persist the noise-level classifier
``validate-config``        parse + validate a config, print the resolved snapshot

All experiment subcommands take ``--config`` (JSON file) plus optional
``--seed``/``--out`` overrides and ``--threads`` for worker parallelism.
Exit codes: 0 success, 1 runtime failure, 2 configuration problems.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import load_config
from .errors import ConfigError, DivergenceError, TrainingDivergedError
from .harness import (
    cmd_ablation,
    cmd_benchmark_integrators,
    cmd_mixing,
    cmd_train_classifier,
)

_COMMANDS = {
    "mixing": cmd_mixing,
    "benchmark-integrators": cmd_benchmark_integrators,
    "ablation": cmd_ablation,
    "train-classifier": cmd_train_classifier,
}


def _add_common(parser):
    parser.add_argument("--config", required=True, help="path to the JSON config file")
    parser.add_argument("--seed", type=int, default=None,
                        help="master seed override (unsigned integer)")
    parser.add_argument("--out", default=None, help="output directory override")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker threads for chains / sweep cells (default 1)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dlglab",
        description="Product-space Langevin sampling experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        _add_common(sub.add_parser(name, help=f"run the {name} experiment"))
    _add_common(
        sub.add_parser("validate-config", help="check a config file and print it resolved")
    )
    return parser


def _fail_config(exc: ConfigError):
    print("configuration invalid:", file=sys.stderr)
    for problem in exc.problems:
        print(f"  - {problem}", file=sys.stderr)
    return 2


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("--threads must be >= 1", file=sys.stderr)
        return 2

    try:
        cfg = load_config(args.config).with_overrides(
            out_dir=args.out, master_seed=args.seed
        )
    except ConfigError as exc:
        return _fail_config(exc)

    if args.command == "validate-config":
        try:
            cfg.validate(require_output=False)
        except ConfigError as exc:
            return _fail_config(exc)
        json.dump(cfg.to_dict(), sys.stdout, indent=2, sort_keys=True)
        print()
        return 0

    try:
        manifest = _COMMANDS[args.command](cfg, threads=args.threads)
    except ConfigError as exc:
        return _fail_config(exc)
    except (DivergenceError, TrainingDivergedError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 1

    print(f"wrote {len(manifest['outputs'])} files to {cfg.out_dir}")
    for entry in manifest["outputs"]:
        print(f"  {entry['file']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
