"""Batch command line interface.

Usage::

    python -m src.cli run --config configs/frenkel_demo.yaml
    python -m src.cli compare results/a.tsv results/b.tsv --rtol 1e-8
"""

import argparse
import logging
import os
import sys
from typing import List, Optional

from src import cache_helpers
from src.exceptions import InputValidationError, NumericalError, PathBudgetExceededError, PilError
from src.export import compare_tables
from src.pipeline import RunOptions, run_pipeline
from src.run_config import load_config
from src.settings import configure_logging, get_settings, load_environment, parse_log_level

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_DIFFERENT = 1
EXIT_VALIDATION = 2
EXIT_BUDGET = 3
EXIT_NUMERICAL = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pil",
        description="Path-integral dynamical maps, transfer tensors and Lindblad-augmented propagation.",
    )
    parser.add_argument("--log-level", default=None, help="Overrides LOG_LEVEL (DEBUG, INFO, ...)")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--cache-dir", default=None, help="Cache directory (default: PIL_CACHE_DIR)")
        p.add_argument("--force-recompute", action="store_true", help="Ignore cached stages")
        p.add_argument("--budget", type=int, default=None, help="Max dense path states (d^2)^(L+1)")
        p.add_argument("--workers", type=int, default=None, help="Worker threads (default: PIL_WORKERS)")

    add_run_flags(sub.add_parser("maps", help="Generate and cache dynamical maps"))
    add_run_flags(sub.add_parser("ttm", help="Extract transfer tensors and memory kernel"))
    propagate = sub.add_parser("propagate", help="Propagate selected jump sets")
    add_run_flags(propagate)
    propagate.add_argument("--jump-set", action="append", default=None, help="Jump set label (repeatable)")
    add_run_flags(sub.add_parser("run", help="Full pipeline"))

    compare = sub.add_parser("compare", help="Compare two trajectory tables")
    compare.add_argument("first")
    compare.add_argument("second")
    compare.add_argument("--rtol", type=float, default=1e-8)
    compare.add_argument("--atol", type=float, default=1e-10)

    cache = sub.add_parser("cache", help="List or clear cache entries")
    cache.add_argument("--cache-dir", default=None)
    cache.add_argument("--clear", action="store_true")
    return parser


def _print_progress(percent: int, text: str) -> None:
    log.debug(f"[{percent:3d}%] {text}")


def _run_command(args: argparse.Namespace, settings) -> int:
    config = load_config(args.config)
    options = RunOptions(
        cache_dir=args.cache_dir or settings.cache_dir,
        force_recompute=args.force_recompute,
        budget=args.budget if args.budget is not None else settings.path_budget,
        workers=args.workers if args.workers is not None else settings.workers,
        base_dir=os.path.dirname(os.path.abspath(args.config)),
        progress_callback=_print_progress,
    )
    stop_after = {"maps": "maps", "ttm": "ttm"}.get(args.command)
    result = run_pipeline(
        config,
        options,
        stop_after=stop_after,
        jump_set_labels=getattr(args, "jump_set", None),
    )
    for stage in result.stages:
        print(f"{stage.name}\t{stage.source}\t{stage.key[:16]}")
    for path in result.output_files:
        print(path)
    return EXIT_OK


def _compare_command(args: argparse.Namespace) -> int:
    same, problems = compare_tables(args.first, args.second, rtol=args.rtol, atol=args.atol)
    if same:
        print("identical within tolerance")
        return EXIT_OK
    for problem in problems:
        print(problem)
    return EXIT_DIFFERENT


def _cache_command(args: argparse.Namespace, settings) -> int:
    cache_dir = args.cache_dir or settings.cache_dir
    if args.clear:
        removed = cache_helpers.clear_cache(cache_dir)
        print(f"removed {removed} entries")
        return EXIT_OK
    for entry in cache_helpers.list_entries(cache_dir):
        print(f"{entry['stage']}\t{entry['key'][:16]}\t{entry['created_at']}\t{entry['path']}")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point; returns the process exit code."""
    load_environment()
    parser = build_parser()
    args = parser.parse_args(argv)
    settings = get_settings()
    level = parse_log_level(args.log_level) if args.log_level else settings.log_level
    configure_logging(level)

    try:
        if args.command == "compare":
            return _compare_command(args)
        if args.command == "cache":
            return _cache_command(args, settings)
        return _run_command(args, settings)
    except InputValidationError as e:
        log.error(f"Invalid input: {e}")
        return EXIT_VALIDATION
    except PathBudgetExceededError as e:
        log.error(f"Refusing dense path sum: {e}")
        return EXIT_BUDGET
    except NumericalError as e:
        log.error(f"Numerical failure: {e}", exc_info=True)
        return EXIT_NUMERICAL
    except PilError as e:
        log.error(f"Unexpected error: {e}", exc_info=True)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
