"""
Command-line entry point of the Hele-Shaw verification harness.

Usage:
    python -m app.main --preset lyapunov --out results/lyapunov
    python -m app.main --config experiment.json --seed 3

Every flag has a configuration-file equivalent (``preset``, ``output_dir``,
``seed``, ``override_amplitude``); flags win over file values.

Exit codes: 0 ok, 1 acceptance violations, 2 solver or I/O failure,
3 configuration error.
"""

import argparse
import sys
from typing import Any, Dict, List, Optional

from .core.config import get_settings
from .core.exceptions import ConfigurationError
from .core.logging import configure_logging, get_logger
from .schemas.experiment import Preset, parse_config
from .services.experiment import ExitStatus, run_experiment

logger = get_logger(__name__)


def build_parser() -> argparse.ArgumentParser:
    settings = get_settings()
    parser = argparse.ArgumentParser(
        prog="heleshaw",
        description=f"{settings.app_name} {settings.app_version}: "
        "spectral Hele-Shaw simulation and identity verification",
    )
    parser.add_argument("--config", help="JSON config file or inline JSON object")
    parser.add_argument(
        "--preset", choices=[p.value for p in Preset], help="Verification study to run"
    )
    parser.add_argument("--out", help="Output directory")
    parser.add_argument("--seed", type=int, help="Random seed")
    parser.add_argument(
        "--override-amplitude",
        action="store_true",
        help="Allow a total initial amplitude above 0.3",
    )
    return parser


def overrides_from_args(args: argparse.Namespace) -> Dict[str, Any]:
    """Translate flags into config keys; absent flags leave file values alone."""
    overrides: Dict[str, Any] = {}
    if args.preset is not None:
        overrides["preset"] = args.preset
    if args.out is not None:
        overrides["output_dir"] = args.out
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.override_amplitude:
        overrides["override_amplitude"] = True
    return overrides


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging()
    try:
        config = parse_config(args.config, overrides_from_args(args))
    except ConfigurationError as exc:
        logger.error("configuration_rejected", violations=len(exc.errors))
        print(str(exc), file=sys.stderr)
        return int(ExitStatus.CONFIG_ERROR)
    return run_experiment(config)


if __name__ == "__main__":
    sys.exit(main())
