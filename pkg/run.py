#!/usr/bin/env python3
"""
W2Checks - Main Entry Point

Run one experiment or a whole suite of JSON configs:
    python run.py distance --config experiment-configs/acceptance/distance_dirac.json
    python run.py jko --config my_jko.json --out runs/ --tolerance-scale 2
    python run.py suite experiment-configs/acceptance

Exit status: 0 all verdicts pass, 1 a verdict failed, 2 config or I/O error,
3 a numerical failure (solver gave up, degenerate input) stopped a run.
"""

import argparse
import logging
import os
import sys

# Ensure the project root is in the path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from config.settings import Config
from w2checks.experiment_config import KINDS, ConfigError, load_config

EXIT_OK = 0
EXIT_VERDICT = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def parse_args(argv=None):
    parser = argparse.ArgumentParser(description="Numerical checks in Wasserstein space")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", default=Config.OUTPUT_DIR, help="Directory for trace/manifest/verdict files")
        p.add_argument("--tolerance-scale", type=float, default=1.0,
                       help="Multiply every verdict tolerance by this factor")
        p.add_argument("--verbose", action="store_true", help="Debug logging")
        p.add_argument("--quiet", action="store_true", help="Skip the console summary")

    for kind in KINDS:
        p = sub.add_parser(kind, help=f"Run a {kind} experiment")
        p.add_argument("--config", required=True, help="Experiment config (JSON)")
        common(p)

    p = sub.add_parser("suite", help="Run every *.json config in a directory")
    p.add_argument("directory", help="Directory of experiment configs")
    common(p)
    return parser.parse_args(argv)


def main(argv=None):
    args = parse_args(argv)
    level = logging.DEBUG if args.verbose else getattr(logging, Config.LOG_LEVEL, logging.INFO)
    logging.basicConfig(level=level, format='%(message)s')

    from w2checks.experiment_runner import NUMERICAL_ERRORS, run
    from w2checks.report_console import print_suite, print_verdict
    from w2checks.suite_executor import run_suite

    try:
        if args.command == "suite":
            report = run_suite(args.directory, args.out, args.tolerance_scale)
            if not args.quiet:
                print_suite(report)
            if report.config_errors:
                return EXIT_CONFIG
            if report.numerical_errors:
                return EXIT_NUMERICAL
            return EXIT_OK if report.passed else EXIT_VERDICT

        config = load_config(args.config, tolerance_scale=args.tolerance_scale)
        if config.kind != args.command:
            raise ConfigError(f"config kind is {config.kind!r}, not {args.command!r}",
                              path=args.config, field="kind")
        result = run(config, args.out)
    except ConfigError as exc:
        logging.getLogger(__name__).error("Config error: %s", exc)
        return EXIT_CONFIG
    except OSError as exc:
        logging.getLogger(__name__).error("I/O error: %s", exc)
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as exc:
        logging.getLogger(__name__).error("Numerical failure: %s: %s", type(exc).__name__, exc)
        return EXIT_NUMERICAL

    if not args.quiet:
        print_verdict(result.verdict, result.paths)
    return EXIT_OK if result.verdict.passed else EXIT_VERDICT


if __name__ == '__main__':
    sys.exit(main())
