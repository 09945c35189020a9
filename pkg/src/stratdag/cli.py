"""Command-line entry point: one subcommand per scenario.

    stratdag <scenario> --config cfg.yaml [--out-dir DIR] [--seed N] [--mode M]

Exit status is 0 only when the scenario's embedded checks pass."""

from __future__ import annotations

import argparse
import sys

from .bench import run
from .config import SCENARIOS, ConfigError, parse_config


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stratdag", description=__doc__)
    sub = parser.add_subparsers(dest="scenario", required=True)
    for name in SCENARIOS:
        p = sub.add_parser(name, help=f"run the {name} scenario")
        p.add_argument("--config", required=True, help="experiment config file (YAML)")
        p.add_argument("--out-dir", default=None, help="output directory (default: from config)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--mode", choices=("exact", "empirical"), default=None, help="override the observation mode")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = parse_config(args.config)
    except ConfigError as exc:
        print(f"config error at {exc.field_path}: {exc}", file=sys.stderr)
        return 2
    if config.scenario != args.scenario:
        print(
            f"config declares scenario {config.scenario!r} but subcommand is {args.scenario!r}",
            file=sys.stderr,
        )
        return 2
    if args.seed is not None:
        config.seed = args.seed
    if args.mode is not None:
        config.mode = args.mode
        if config.mode == "empirical" and config.count < 16:
            config.count = 100_000
    report = run(config, args.out_dir)
    for check in report.checks:
        status = "pass" if check["passed"] else "FAIL"
        detail = f" ({check['detail']})" if check["detail"] else ""
        print(f"[{status}] {check['name']}{detail}")
    print(f"report: {report.scenario} seed={report.seed} wall={report.wall_clock:.2f}s -> {'ok' if report.passed else 'FAILED'}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
