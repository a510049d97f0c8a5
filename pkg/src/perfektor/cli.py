"""Command-line entry point.

    perfektor <subcommand> --config FILE [--seed S] [--replicates N] [--out DIR]

Subcommands mirror the experiment kinds (validate, decompose, sample,
sketch, trajectory, couple, finitary, oracle, compare, suite).  Exit code 0
means every embedded assertion passed; 1 means an assertion failed; 2 means
the configuration was invalid.
"""

from __future__ import annotations

import argparse
import json
import sys

from .finitary import DepthBudgetExceeded
from .harness import KINDS, ConfigError, ExperimentConfig, run_experiment
from .rates import ConditionNotSatisfied, ModelError
from .sketch import StepBudgetExceeded


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="perfektor",
        description="Exact stationary sampling for multicolor lattice systems.")
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind)
        p.add_argument("--config", help="experiment config JSON", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--replicates", type=int, default=None)
        p.add_argument("--out", default=None)
        if kind == "decompose":
            p.add_argument("--check", action="store_true",
                           help="verify the reconstruction identity and report the error")
        if kind == "sketch":
            p.add_argument("--horizon", type=float, default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config is not None:
            config = ExperimentConfig.from_json(args.config)
            config.kind = args.kind
        else:
            config = ExperimentConfig(kind=args.kind)
        if args.seed is not None:
            config.seed = args.seed
        if args.replicates is not None:
            config.replicates = args.replicates
        if args.out is not None:
            config.out_dir = args.out
        if getattr(args, "check", False):
            config.extras["check"] = True
        if getattr(args, "horizon", None) is not None:
            config.extras["horizon"] = args.horizon
        result = run_experiment(config)
    except (ConfigError, ModelError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConditionNotSatisfied, StepBudgetExceeded, DepthBudgetExceeded) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 1
    for f in result.files:
        print(f"wrote {f}")
    if result.summary:
        print(json.dumps(result.summary, indent=1, sort_keys=True, default=str))
    return 0 if result.ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
