"""
args.py - Argument parsing utilities

Builds the single flat parser behind manager.py and applies the logging and
verbosity settings the flags ask for.
"""

import argparse
import logging
import logging.config
import os
import sys
from typing import List, Optional

from src.config import (
    DEFAULT_SEED,
    DEFAULT_THREADS,
    LOG_FILE,
    LOG_LEVEL,
    OUTPUT_DIR,
    PRESETS,
    PROJECT_NAME,
    build_logging_config,
)
from src.detect import Algorithm
from src.errors import ConfigError

ACTIONS = ("generate", "detect", "phase", "theory")

EPILOG = """
Examples:
  python manager.py generate --config problem.json --output-dir run1 --seed 7
  python manager.py detect --data-dir run1 --algorithm somp
  python manager.py detect --config problem.json --algorithm acie --inner osga --iters 5
  python manager.py detect --data-dir run1 --algorithm lasso --gap-plot gaps.png
  python manager.py phase --config grid.json --output-dir phase --threads 8
  python manager.py phase --config grid.json --output-dir phase --resume
  python manager.py theory --n 100 --k 5 --m 10 --mu2 7 --sigma2-sq 1 --sigma1-sq 1

Exit codes: 0 success, 1 configuration or usage, 2 detection error or
flagged result, 3 file input/output, 130 interrupted.
"""


class UsageParser(argparse.ArgumentParser):
    """Reports usage errors as ConfigError so they exit with code 1"""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def create_parser() -> argparse.ArgumentParser:
    """Create the command-line parser"""
    parser = UsageParser(
        prog=PROJECT_NAME,
        description="Anomaly detection from compressed multiple measurement vectors",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=EPILOG,
    )
    parser.add_argument("action", choices=ACTIONS, help="Action to perform")

    # Global options
    parser.add_argument(
        "--seed",
        type=int,
        default=None,
        help=f"Base random seed (default: MMV_SEED or {DEFAULT_SEED})",
    )
    parser.add_argument(
        "--threads",
        type=int,
        default=DEFAULT_THREADS,
        help=f"Worker processes for phase grids (default: {DEFAULT_THREADS})",
    )
    parser.add_argument(
        "--output-dir",
        type=str,
        default=str(OUTPUT_DIR),
        help=f"Directory for generated files (default: {OUTPUT_DIR})",
    )
    parser.add_argument(
        "--config",
        type=str,
        help="Problem config (generate, detect) or grid config (phase) JSON file",
    )
    parser.add_argument(
        "--preset",
        choices=sorted(PRESETS),
        help="Fill model and distributions from a reference setting",
    )

    # Detection options
    parser.add_argument("--data-dir", type=str, help="Directory written by generate (detect)")
    parser.add_argument(
        "--algorithm",
        choices=[a.value for a in Algorithm],
        help="Detector (detect default: osga; phase default: from the grid config)",
    )
    parser.add_argument("--k", type=int, help="Number of anomalies to report (detect, theory)")
    parser.add_argument(
        "--inner",
        choices=["osga", "somp", "lasso"],
        default="osga",
        help="Inner detector for tecc and acie (default: osga)",
    )
    parser.add_argument("--iters", type=int, default=None, help="ACIE iterations L (default: 5)")
    parser.add_argument(
        "--reestimate",
        action="store_true",
        help="Re-select the ACIE support after every iteration",
    )
    parser.add_argument(
        "--lambda",
        dest="lam",
        type=float,
        default=None,
        help="LASSO regularization (default: 0.1 * ||phi^T y||_inf)",
    )
    parser.add_argument("--tol", type=float, default=None, help="LASSO KKT tolerance")
    parser.add_argument("--max-iters", type=int, default=None, help="LASSO iteration budget")
    parser.add_argument(
        "--no-acceleration",
        action="store_true",
        help="Use plain proximal gradient instead of FISTA",
    )
    parser.add_argument("--gap-plot", type=str, help="Write a sorted-score gap plot (detect)")

    # Phase options
    parser.add_argument(
        "--resume",
        action="store_true",
        help="Reuse cells already present in the output directory (phase)",
    )
    parser.add_argument(
        "--no-plots",
        action="store_true",
        help="Skip heatmap rendering (phase)",
    )

    # Theory options
    parser.add_argument("--n", type=int, default=100, help="Number of variables N (theory)")
    parser.add_argument("--m", type=int, default=10, help="Measurements per step M (theory)")
    parser.add_argument("--mu2", type=float, default=7.0, help="Anomalous mean (theory)")
    parser.add_argument("--sigma2-sq", type=float, default=1.0, help="Anomalous variance (theory)")
    parser.add_argument("--sigma1-sq", type=float, default=1.0, help="Prevalent variance (theory)")
    parser.add_argument(
        "--model",
        choices=["jsm2r", "jsm3r"],
        default="jsm2r",
        help="Signal model for the separation check (theory)",
    )

    # Logging
    parser.add_argument(
        "--log-level",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        default=None,
        help=f"Logging level (default: MMV_LOG_LEVEL or {LOG_LEVEL})",
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="Enable verbose output")

    return parser


def validate_args(args: argparse.Namespace) -> None:
    """Reject flag values argparse cannot check on its own"""
    if args.threads < 1:
        raise ConfigError(f"--threads must be >= 1, got {args.threads}", field="threads")
    if args.k is not None and args.k < 1:
        raise ConfigError(f"--k must be >= 1, got {args.k}", field="k")
    if args.iters is not None and args.iters < 1:
        raise ConfigError(f"--iters must be >= 1, got {args.iters}", field="iters")
    if args.action == "phase" and not args.config:
        raise ConfigError("phase needs a grid config (--config)", field="config")
    if args.action == "generate" and not args.config:
        raise ConfigError("generate needs a problem config (--config)", field="config")
    if args.action == "detect" and not (args.data_dir or args.config):
        raise ConfigError("detect needs --data-dir or --config", field="data-dir")


def setup_logging(level: str, log_file: Optional[str] = LOG_FILE) -> None:
    """Configure logging unless the host application already did"""
    if not logging.getLogger().handlers:
        logging.config.dictConfig(build_logging_config(level, log_file))
    else:
        logging.getLogger().setLevel(level)


def parse_and_setup_args(
    parser: argparse.ArgumentParser, argv: Optional[List[str]] = None
) -> argparse.Namespace:
    """Parse arguments and setup logging and verbosity"""
    args = parser.parse_args(argv)

    if args.verbose:
        os.environ["VERBOSE"] = "1"
    level = "DEBUG" if args.verbose else (args.log_level or LOG_LEVEL)
    setup_logging(level)

    # phase falls back to the grid's base_seed unless --seed was given
    args.seed_given = args.seed is not None
    if args.seed is None:
        args.seed = DEFAULT_SEED
    return args
