"""Command-line entry point: config-driven experiment pipeline."""

from __future__ import annotations

import argparse
import sys

from .errors import FairlendError
from .experiment import (
    load_config,
    run_experiment,
    stage_debias,
    stage_evaluate,
    stage_generate,
    stage_inject,
    stage_train,
    stage_tune,
)

STAGES = {
    "generate": stage_generate,
    "inject": stage_inject,
    "tune": stage_tune,
    "train": stage_train,
    "debias": stage_debias,
    "evaluate": stage_evaluate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairlend",
        description=(
            "Train boosted models on (possibly counterfactually biased) loan "
            "decision data and run de-biasing experiments."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in list(STAGES) + ["run-all"]:
        p = sub.add_parser(name, help=f"run the {name} stage")
        p.add_argument("--config", required=True, help="path to the TOML experiment config")
        p.add_argument("--out-dir", default=None, help="override the [output] dir")
        p.add_argument(
            "--seed",
            type=int,
            default=None,
            help="override every stage seed (derived per stage from this value)",
        )
        p.add_argument("--threads", type=int, default=1, help="histogram worker threads")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed_override=args.seed, out_dir_override=args.out_dir)
        if args.command == "run-all":
            written = run_experiment(cfg, n_threads=args.threads)
        else:
            written = STAGES[args.command](cfg, n_threads=args.threads)
    except FairlendError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    for path in written:
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
