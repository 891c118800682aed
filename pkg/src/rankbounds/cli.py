"""Command-line entry point.

Subcommands mirror the experiment drivers:

    identify    population-scale identified sets from a simulation design
    test        one hypothesis test at a fixed parameter value
    confset     grid-search confidence set for the index direction
    joint       per-duration joint confidence scans (direction, t)
    montecarlo  replicated rejection-frequency study
    empirical   full duration-data analysis from a CSV

Every subcommand takes --config <file.json> plus optional --seed, --threads,
--out, and --dry-run. Exit codes: 0 success, 2 configuration problems,
3 numeric failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .data import IngestionError, NormalizationError, SingularCovarianceError
from .inference import CapacityError, NumericalError
from .runs import COMMANDS, ConfigError, RunConfig, execute

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rankbounds",
        description="Partial-identification bounds and moment-inequality "
                    "confidence sets for censored duration models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} driver")
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="override base_seed")
        p.add_argument("--threads", type=int, default=None, help="worker processes")
        p.add_argument("--out", default=None, help="override out_dir")
        p.add_argument("--dry-run", action="store_true",
                       help="print the work size and exit without computing")
        p.add_argument("--verbose", action="store_true", help="log progress")
    return parser


def load_config(path: str, command: str, out_dir: str | None) -> RunConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return RunConfig.from_dict(raw, command=command, out_dir=out_dir)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = load_config(args.config, args.command, args.out)
        if args.seed is not None:
            config.base_seed = args.seed
            if "seed" in config.tuning:
                config.tuning = {**config.tuning, "seed": args.seed}
        if args.threads is not None:
            config.threads = args.threads
        config.validate()
        result = execute(config, dry_run=args.dry_run)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IngestionError, NormalizationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, CapacityError, SingularCovarianceError,
            np.linalg.LinAlgError, FloatingPointError, ZeroDivisionError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if args.dry_run:
        print(json.dumps(result, sort_keys=True, indent=2))
        return EXIT_OK
    print(f"wrote {config.command} results to {config.out_dir}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
