"""Command-line entry point for EchoEA.

    python main.py train --config full.cfg --max-epochs 50
    python main.py evaluate --run-name full
    python main.py bootstrap-stats --run-name full
    python main.py synth data/synthetic --synth-entities 200
    python main.py align --run-name full

Every setting is also a flag (``learning_rate`` <-> ``--learning-rate``);
flags override the config file. Exit codes: 0 ok, 1 unexpected, 2 invalid
configuration or arguments, 3 missing/corrupt files, 4 numerical failure.
"""
import argparse
import asyncio
import logging
import sys
from dataclasses import fields
from pathlib import Path
from typing import List, Optional

from api import EchoEAAPI
from config import DATA_DIR, EXIT_IO, EXIT_NUMERIC, EXIT_OK, EXIT_UNEXPECTED, EXIT_VALIDATION, LOG_LEVEL
from core import bootstrap, shutdown
from database import DatabaseError
from formatters import MetricFormatter
from services.kg_loader import DatasetError
from services.settings_service import ConfigValidationError, ExperimentSettings
from services.training import TrainingError

logger = logging.getLogger(__name__)


def _settings_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", type=Path, default=None, help="flat key=value settings file")
    group = parent.add_argument_group("settings (override the config file)")
    for f in fields(ExperimentSettings):
        group.add_argument(f"--{f.name.replace('_', '-')}", dest=f.name, default=None, metavar="VALUE",
                           help=f"default: {f.default}")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="echoea", description="Entity alignment with Echo encoding and ABGS.")
    sub = parser.add_subparsers(dest="command", required=True)
    parent = _settings_parent()
    sub.add_parser("train", parents=[parent], help="train a variant and write run artifacts")
    sub.add_parser("evaluate", parents=[parent], help="re-evaluate a finished run")
    sub.add_parser("bootstrap-stats", parents=[parent], help="bootstrap quality of a finished run")
    synth = sub.add_parser("synth", parents=[parent], help="write a synthetic KG pair")
    synth.add_argument("directory", type=Path, nargs="?", default=DATA_DIR / "synthetic")
    sub.add_parser("align", parents=[parent], help="write predicted pairs of a finished run")
    return parser


def exit_code_for(error: BaseException) -> int:
    if isinstance(error, TrainingError):
        return EXIT_NUMERIC
    if isinstance(error, (DatasetError, DatabaseError, OSError)):
        return EXIT_IO
    if isinstance(error, (ConfigValidationError, ValueError)):
        return EXIT_VALIDATION
    return EXIT_UNEXPECTED


async def _run(args: argparse.Namespace) -> None:
    api = EchoEAAPI(await bootstrap())
    try:
        overrides = {f.name: getattr(args, f.name) for f in fields(ExperimentSettings)}
        settings = api.load_settings(args.config, overrides)

        if args.command == "train":
            for result in await api.train(settings):
                print(f"{result.output_dir}")
                for report in result.reports:
                    print(f"  {MetricFormatter.report_line(report)}")
        elif args.command == "evaluate":
            for report in await api.evaluate(settings):
                print(MetricFormatter.report_line(report))
        elif args.command == "bootstrap-stats":
            rounds, totals = await api.bootstrap_stats(settings)
            print(rounds.to_string(index=False) if not rounds.empty else "no bootstrap rounds recorded")
            for column, total in totals.items():
                print(f"sum {column}: {'-' if total is None else f'{total:.6f}'}")
        elif args.command == "synth":
            print(api.synth(settings, args.directory))
        elif args.command == "align":
            print(await api.align(settings))
    finally:
        await shutdown()


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=LOG_LEVEL, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        asyncio.run(_run(args))
    except Exception as e:  # Intentionally broad: every failure becomes an exit code
        code = exit_code_for(e)
        if code == EXIT_UNEXPECTED:
            logger.exception(f"Unexpected failure: {e}")
        print(f"echoea: error: {e}", file=sys.stderr)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
