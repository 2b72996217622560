"""Command line: python -m xylab.main <command> --config experiment.yaml"""
import argparse
import sys
import time
from typing import List, Optional

from xylab import __version__
from xylab.api.commands import COMMANDS, RunContext
from xylab.core.errors import XYLabError
from xylab.core.logging import logger
from xylab.models.experiment import load_experiment
from xylab.services.cache import eigen_cache


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xylab", description="Zero-temperature XY-model lab")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, handler in COMMANDS.items():
        cmd = sub.add_parser(name, help=handler.__doc__)
        cmd.add_argument("--config", required=True, help="experiment YAML file")
        cmd.add_argument("--out", default=None, help="output directory (overrides outputs.directory)")
        cmd.add_argument("--threads", type=int, default=1, help="worker threads for independent c values")
        cmd.add_argument("--format", choices=["csv", "json"], default=None, help="write only this format")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    start = time.time()
    logger.info(f"→ {args.command} {args.config}")
    try:
        config = load_experiment(args.config)
        ctx = RunContext(
            config,
            out=args.out,
            threads=args.threads,
            formats=[args.format] if args.format else None,
        )
        written = COMMANDS[args.command](ctx)
    except XYLabError as exc:
        logger.error(f"{args.command} failed: {exc}")
        return exc.exit_code
    except Exception as exc:
        logger.error(f"Unhandled error: {exc}", exc_info=True)
        return 1
    finally:
        eigen_cache.close()
    logger.info(f"← {args.command} wrote {len(written)} files in {time.time() - start:.3f}s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
