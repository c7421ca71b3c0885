"""Command-line entry point: `lokt <stage> --config <path>`."""

from __future__ import annotations

import argparse
import json
import sys

from .artifacts import ConfigMismatchError, MissingPrerequisiteError, OutputLockedError
from .stages import STAGES, run_stage


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lokt",
        description="Label-only model-inversion pipeline, one stage at a time.",
    )
    parser.add_argument("stage", choices=STAGES, help="pipeline stage to run")
    parser.add_argument("--config", required=True, help="path to the experiment YAML")
    parser.add_argument(
        "--overwrite",
        action="store_true",
        help="replace artifacts produced under a different config digest",
    )
    parser.add_argument("--seed", type=int, default=None, help="override the config's global seed")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        result = run_stage(args.stage, args.config, overwrite=args.overwrite, seed=args.seed)
    except (MissingPrerequisiteError, ConfigMismatchError, OutputLockedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps({"stage": args.stage, "result": result}, indent=2, default=str))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
