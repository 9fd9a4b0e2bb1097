from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from goplan import __version__
from goplan.cli.command_registry import COMMAND_DOCUMENTATION
from goplan.cli.experiment_runner import ExperimentRunner
from goplan.cli.run_config import RunConfig
from goplan.errors import (
    CheckpointFormatError,
    ConfigurationError,
    EmptyBufferError,
    MalformedTrajectoryError,
)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_BAD_INPUT = 2

# Bad configs, missing or corrupt inputs and unwritable outputs.
INPUT_ERRORS = (
    ConfigurationError,
    EmptyBufferError,
    MalformedTrajectoryError,
    CheckpointFormatError,
    OSError,
)

_log = logging.getLogger("goplan.cli")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="goplan",
        description="Offline goal-conditioned RL with a weighted CGAN and model-based planning.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "command",
        choices=list(ExperimentRunner.commands.names),
        help="; ".join(f"{name}: {doc}" for name, doc in COMMAND_DOCUMENTATION.items()),
    )
    parser.add_argument("--config", type=Path, help="key=value settings file")
    parser.add_argument("--seed", type=int, help="overrides the config seed")
    parser.add_argument("--plan", action="store_true", help="evaluate with planning")
    parser.add_argument("--out", type=Path, default=Path("runs/goplan"), help="output directory")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    return parser


def _console_handler(verbose: bool) -> logging.Handler:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    handler.setLevel(logging.DEBUG if verbose else logging.INFO)
    return handler


def _file_handler(out_dir: Path) -> logging.Handler:
    handler = logging.FileHandler(out_dir / "goplan.log", encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(asctime)s %(message)s"))
    handler.setLevel(logging.DEBUG)
    return handler


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    root = logging.getLogger("goplan")
    root.setLevel(logging.DEBUG)
    handlers = [_console_handler(args.verbose)]
    root.addHandler(handlers[0])
    try:
        config = RunConfig.from_file(args.config) if args.config else RunConfig()
        args.out.mkdir(parents=True, exist_ok=True)
        handlers.append(_file_handler(args.out))
        runner = ExperimentRunner(
            config, args.out, seed=args.seed, plan=args.plan, log_handler=handlers[-1]
        )
        runner.run(args.command)
    except INPUT_ERRORS as e:
        _log.error(f"{args.command}: {e}")
        return EXIT_BAD_INPUT
    except Exception:
        _log.exception(f"{args.command} failed")
        return EXIT_FAILURE
    finally:
        for handler in handlers:
            root.removeHandler(handler)
            handler.close()
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
