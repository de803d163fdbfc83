"""
Command-line UI component.
"""

import argparse
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import config
from ..models.errors import ConfigurationError, NumericalError
from ..models.preset import PRESETS
from ..services.config_service import ConfigService
from ..services.csv_service import CSVService
from ..services.experiment_service import ArtifactBundle, ExperimentService
from logger_config import LoggerConfig, get_logger

logger = get_logger(__name__)

CONFIG_COMMANDS = {
    "simulate": "Simulate an ensemble and write snapshots.csv",
    "variance": "Closed-form limiting variance per C_alpha (variance.csv, echoed to stdout)",
    "rates": "W1 and t*Var series with rate fits (w1.csv, variance_series.csv, summary.csv)",
    "poisson": "Poisson solution of the fluctuation source on the density grid (poisson.csv)",
    "malliavin": "Moment scaling of Malliavin derivatives (malliavin.csv)",
    "custom": "Full artifact bundle from a config file",
}


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors are configuration errors (exit code 1)."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise ConfigurationError(message)


class LabCLI:
    """Builds the parser and routes subcommands to the experiment service."""

    @staticmethod
    def build_parser() -> argparse.ArgumentParser:
        parser = _Parser(prog="sgdct-lab", description="SGDCT fluctuation laboratory")
        commands = parser.add_subparsers(dest="command", required=True, metavar="<subcommand>")

        for name, help_text in CONFIG_COMMANDS.items():
            sub = commands.add_parser(name, help=help_text, description=help_text)
            sub.add_argument("--config", required=True, type=Path, help="TOML run configuration")
            LabCLI._add_run_flags(sub)

        preset = commands.add_parser("preset", help="Run a published example",
                                     description="Run a published example preset")
        preset.add_argument("name", choices=sorted(PRESETS), help="Preset name")
        LabCLI._add_run_flags(preset)
        return parser

    @staticmethod
    def _add_run_flags(sub: argparse.ArgumentParser) -> None:
        sub.add_argument("--out", type=Path, default=None, help=f"Output directory (default {config.OUTPUT_DIR})")
        sub.add_argument("--seed", type=int, default=None, help="Master seed override")
        sub.add_argument("--paths", type=int, default=None, help="Number of paths override")
        sub.add_argument("--dt", type=float, default=None, help="Time step override")
        sub.add_argument("--t-end", dest="t_end", type=float, default=None, help="Final time override")
        sub.add_argument("--workers", type=int, default=None,
                         help="Worker processes (default: config, then SGDCT_THREADS)")

    @staticmethod
    def out_dir(args: argparse.Namespace) -> Path:
        return args.out if args.out is not None else config.OUTPUT_DIR

    @staticmethod
    def setup_logging(args: argparse.Namespace) -> None:
        """Daily log file under <out>/logs, or SGDCT_LOG_DIR when set."""
        LoggerConfig.setup_logging(
            config.log_dir_for(LabCLI.out_dir(args)), LoggerConfig.level_from_name(config.LOG_LEVEL)
        )

    @staticmethod
    def run(args: argparse.Namespace) -> ArtifactBundle:
        """Execute a parsed invocation."""
        overrides = {"n_paths": args.paths, "seed": args.seed, "dt": args.dt, "t_end": args.t_end}
        out_dir = LabCLI.out_dir(args)
        logger.info(f"[CLI] {args.command}: out={out_dir}, overrides={overrides}")

        if args.command == "preset":
            return ExperimentService.run_preset(args.name, overrides, out_dir, args.workers)
        if args.command in ("rates", "custom"):
            return ExperimentService.run_custom(args.config, overrides, out_dir, args.workers)

        run = ConfigService.load(args.config, overrides)
        workers = ConfigService.resolve_workers(args.workers, run)
        if args.command == "simulate":
            return ExperimentService.run_simulate(run, out_dir, workers)
        if args.command == "variance":
            return ExperimentService.run_variance(run, out_dir)
        if args.command == "poisson":
            return ExperimentService.run_poisson(run, out_dir)
        return ExperimentService.run_malliavin(run, out_dir, workers)


def dispatch(argv: Optional[Sequence[str]] = None, setup_logging: bool = False) -> int:
    """
    Parse argv, run the subcommand and map the outcome to an exit code.

    Args:
        argv: Arguments without the program name
        setup_logging: Configure file logging once the output directory is known

    Returns:
        0 on success, 1 on configuration errors (before compute),
        2 on numerical errors during compute
    """
    parser = LabCLI.build_parser()
    try:
        args = parser.parse_args(list(argv) if argv is not None else None)
        if setup_logging:
            LabCLI.setup_logging(args)
        bundle = LabCLI.run(args)
    except ConfigurationError as e:
        logger.error(f"[CLI] Configuration error: {e}", exc_info=True)
        print(f"configuration error: {e}", file=sys.stderr)
        return 1
    except NumericalError as e:
        logger.error(f"[CLI] Numerical error: {e}", exc_info=True)
        print(f"numerical error: {e}", file=sys.stderr)
        return 2
    except SystemExit as e:
        # --help
        return e.code if isinstance(e.code, int) else 0

    if args.command == "variance" and bundle.summary is not None:
        print(CSVService.to_text(bundle.summary), end="")
    files: List[Path] = bundle.files
    print(f"wrote {len(files)} file(s) under {bundle.out_dir}")
    return 0
