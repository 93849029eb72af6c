"""Command-line entry points.

    fedids run <config.yaml> [--output-dir DIR] [--seed N] [-v|-q]
    fedids validate <config.yaml>

Exit codes: 0 success, 1 config validation failure, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import ConfigError, FedIDSError
from .experiment import load_config, run_experiment, validate_config

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedids", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment from a config file")
    run.add_argument("config", help="path to the experiment config")
    run.add_argument("--output-dir", default=None, help="override output directory")
    run.add_argument("--seed", type=int, default=None, help="override the seed")
    run.add_argument("-v", "--verbose", action="count", default=0)
    run.add_argument("-q", "--quiet", action="store_true")

    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("config", help="path to the experiment config")
    return parser


def _setup_logging(verbose: int, quiet: bool) -> None:
    if quiet:
        level = logging.ERROR
    elif verbose >= 2:
        level = logging.DEBUG
    elif verbose == 1:
        level = logging.INFO
    else:
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)

    if args.command == "validate":
        try:
            violations = validate_config(args.config)
        except FedIDSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INVALID
        if violations:
            for v in violations:
                print(v)
            return EXIT_INVALID
        print("ok")
        return EXIT_OK

    _setup_logging(args.verbose, args.quiet)
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"invalid config:\n{exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        result = run_experiment(config, output_dir=args.output_dir, seed=args.seed)
    except FedIDSError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {result.out_dir}")
    print(f"headline macro-F1: {result.headline_f1:.4f}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
