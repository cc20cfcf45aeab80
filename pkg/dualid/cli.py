"""
Command-line interface for DUALID.

    dualid run --config <path> --seed <n> --out <dir>
    dualid sweep --config <path> --seeds <n> [--vary key=start:stop:steps] --out <dir>
    dualid validate --config <path>

Exit codes: 0 on success, 2 on a configuration error, 1 on any other failure.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from dualid.errors import ConfigError, DualIdError
from dualid.models.database_config import get_database_url
from dualid.models.ledger_model import open_ledger, record_run
from dualid.scenarios.config import load_config
from dualid.scenarios.sweep import VarySpec, run_sweep, run_to_directory, with_seed

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(levelname)-5.5s [%(name)s] %(message)s"

EXIT_OK = 0
EXIT_RUNTIME_ERROR = 1
EXIT_CONFIG_ERROR = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dualid",
        description="Dual-identity ISAC UAV network simulator.",
    )
    parser.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging verbosity.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Run one scenario.")
    run.add_argument("--config", type=Path, required=True, help="Scenario INI file.")
    run.add_argument("--seed", type=int, default=None, help="Override the config seed.")
    run.add_argument("--out", type=Path, required=True, help="Report directory.")

    sweep = commands.add_parser("sweep", help="Run a scenario over seeds and one varied key.")
    sweep.add_argument("--config", type=Path, required=True, help="Scenario INI file.")
    sweep.add_argument("--seeds", type=int, required=True, help="Seeds per value.")
    sweep.add_argument(
        "--vary", default=None, help="Varied key as section.field=start:stop:steps."
    )
    sweep.add_argument("--workers", type=int, default=1, help="Parallel worker processes.")
    sweep.add_argument("--out", type=Path, required=True, help="Sweep root directory.")

    validate = commands.add_parser("validate", help="Check a scenario file.")
    validate.add_argument("--config", type=Path, required=True, help="Scenario INI file.")
    return parser


def _run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        config = with_seed(config, args.seed)
    metrics = run_to_directory(config, args.out)

    _, SessionLocal = open_ledger(get_database_url(args.out))
    with SessionLocal() as session:
        record_run(
            session,
            scenario=config.scenario.name,
            kind=config.scenario.kind.value,
            seed=config.scenario.seed,
            metrics=metrics,
            out_dir=str(args.out),
        )
    for name, value in metrics.items():
        print(f"{name}\t{format(value, '.9g')}")
    return EXIT_OK


def _sweep(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    vary = VarySpec.parse(args.vary) if args.vary else None
    if args.workers < 1:
        raise ConfigError("--workers must be at least 1")
    summary = run_sweep(config, args.seeds, args.out, vary, workers=args.workers)
    print(summary.to_string(index=False))
    return EXIT_OK


def _validate(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    print(
        f"ok: {config.scenario.name} ({config.scenario.kind.value}), "
        f"{len(config.nodes)} nodes, {config.n_epochs} epochs"
    )
    return EXIT_OK


COMMANDS = {"run": _run, "sweep": _sweep, "validate": _validate}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format=LOG_FORMAT)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc.detail}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except DualIdError as exc:
        print(f"error: {exc.detail}", file=sys.stderr)
        return EXIT_RUNTIME_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
