"""
relmon
Command-line entry point.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from src import __version__  # noqa: E402
from src.core.errors import ConfigInvalid, NumericalFailure, RelmonError  # noqa: E402

TASK_HELP = {
    "periods": "periods of every factor at the basepoint (or options.periods_at)",
    "monodromy": "integer monodromy matrices of the configured loops",
    "cocycle": "monodromy and cocycle of the configured loops or of all generators",
    "rank": "relative lattice rank over kernel words and the coboundary decision",
    "betti-grid": "Betti coordinates of the section over a grid",
    "torsion-check": "torsion verdict from a Betti grid",
    "verify": "run the built-in acceptance suite",
}


def _criteria(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma separated list of numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment JSON file or bundled experiment name")
    common.add_argument("--out", help="write the result here (.csv for grids)")
    common.add_argument("--precision", choices=("double", "extended"), help="arithmetic precision")
    common.add_argument("--max-word-len", type=int, help="bound for kernel word search")
    common.add_argument("--seed-kernel-words", help="JSON file with a list of base words of trivial monodromy")
    common.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR")
    common.add_argument("--workers", type=int, help="worker threads for independent loops and grid nodes")

    parser = argparse.ArgumentParser(
        prog="relmon",
        description="Monodromy, cocycles and relative period lattices of sections of elliptic families.",
    )
    parser.add_argument("--version", action="version", version=f"relmon {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in TASK_HELP.items():
        task_parser = sub.add_parser(name, parents=[common], help=help_text)
        if name == "verify":
            task_parser.add_argument("--criteria", type=_criteria, help="subset such as 1,3,9")
    sub.add_parser("list", parents=[common], help="list bundled and saved experiments")
    return parser


def _load_experiment(args):
    from src.cli.schema import ExperimentConfig, Task, parse_words
    from src.core.experiment_store import get_store
    from src.core.numerics import Tolerance
    from src.utils.file_utils import read_json

    task = Task(args.command)
    if args.config is None:
        if task is not Task.VERIFY:
            raise ConfigInvalid(f"{args.command} needs --config")
        cfg = ExperimentConfig(name="verify", task=Task.VERIFY, tolerances=Tolerance.from_settings())
    else:
        cfg = ExperimentConfig.from_dict(get_store().load(args.config))
    seeds = None
    if args.seed_kernel_words:
        seeds = parse_words(read_json(Path(args.seed_kernel_words)), "seed_kernel_words")
    return cfg.with_overrides(task=task, out=args.out, max_word_len=args.max_word_len, seed_kernel_words=seeds)


def _list_experiments() -> int:
    from src.core.experiment_store import get_store

    for meta in get_store().list_experiments():
        origin = "bundled" if meta.bundled else "user"
        print(f"{meta.name:28s} {meta.task:14s} {origin:8s} {meta.description}")
    return 0


def _foreign_failure(error: Exception, command: str, logger) -> RelmonError:
    """Library exceptions (numpy, scipy, mpmath, sympy) reported as numerical failures."""
    logger.exception(f"Unexpected {type(error).__name__} during {command}")
    return NumericalFailure(f"{type(error).__name__}: {error}", {"operation": command})


def main(argv: Optional[List[str]] = None) -> int:
    """Main application entry point; returns the exit code."""
    args = build_parser().parse_args(argv)

    try:
        from src.config import config
    except ConfigInvalid as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code

    from src.utils.logger import get_run_logger, log_run_event, setup_logging

    if args.workers is not None:
        config.app.max_threads = max(1, args.workers)
    level = args.log_level or config.app.log_level
    logger = setup_logging(config.logs_directory, level, config.app.log_to_file)
    get_run_logger(config.logs_directory if config.app.log_to_file else None)
    logger.info(f"relmon {__version__} starting: {args.command}")

    if args.command == "list":
        return _list_experiments()

    from src.cli.commands import run

    try:
        cfg = _load_experiment(args)
        log_run_event("task_started", {"experiment": cfg.name, "config_hash": cfg.config_hash()},
                      task=args.command)
        report = run(cfg, args.precision, getattr(args, "criteria", None))
    except Exception as e:
        error = e if isinstance(e, RelmonError) else _foreign_failure(e, args.command, logger)
        logger.error(f"{type(error).__name__}: {error}")
        print(f"error: {type(error).__name__}: {error}", file=sys.stderr)
        log_run_event("task_failed", {"error": type(error).__name__, "message": str(error),
                                      "context": error.context, "exit_code": error.exit_code},
                      task=args.command, success=False)
        return error.exit_code

    if cfg.output.path is None:
        if cfg.output.format == "csv" and report.csv is not None:
            sys.stdout.write(report.csv)
        else:
            print(json.dumps(report.to_dict(), indent=2))
    log_run_event("task_finished", {
        "experiment": cfg.name,
        "exit_code": report.exit_code,
        "residuals": report.residuals,
        "wall_time": report.wall_time,
        "config_hash": report.config_hash,
    }, task=args.command, success=report.success)
    logger.info(f"Exiting with code {report.exit_code}")
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
