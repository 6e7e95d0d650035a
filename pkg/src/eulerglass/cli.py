"""Command line entry point: ``eulerglass <experiment> [--config FILE] [--key value ...]``.

Exit codes: 0 success, 1 validation failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import EXPERIMENTS, KEYS, parse_config
from .errors import ConfigError, CoverageError, InvalidArgumentError, ResourceLimitError
from .experiments import run_experiment

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eulerglass", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="experiment")
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", type=Path, help="key=value file; flags override it")
        for key, spec in KEYS.items():
            if key == "experiment":
                continue
            flags = [f"--{key}"]
            if "_" in key:
                flags.append(f"--{key.replace('_', '-')}")
            if spec.kind == "bool":
                # bare --plot means true; --plot false also works
                p.add_argument(*flags, dest=key, nargs="?", const="true", metavar="BOOL",
                               help=spec.accepted)
            else:
                p.add_argument(*flags, dest=key, metavar="VALUE", help=spec.accepted)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK

    source = ""
    if args.config is not None:
        try:
            source = args.config.read_text()
        except OSError as exc:
            print(f"error: cannot read config: {exc}", file=sys.stderr)
            return EXIT_USAGE
    overrides = {k: getattr(args, k) for k in KEYS if k != "experiment"}
    overrides["experiment"] = args.experiment
    try:
        cfg = parse_config(source, overrides)
    except ConfigError as exc:
        for v in exc.violations:
            print(f"config error: {v}", file=sys.stderr)
        return EXIT_USAGE

    try:
        result = run_experiment(cfg)
    except (InvalidArgumentError, ResourceLimitError, CoverageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    out = Path(cfg.output_dir)
    if cfg.experiment == "theory":
        sys.stdout.write((out / "theory.csv").read_text())
    else:
        for name in result.outputs:
            print(out / name)
    if result.passed is False:
        print("validation failed", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
