# -*- coding: utf-8 -*-
"""
tilewise command-line entry point

Subcommands:
    transform  reparameterize a model with TileTrans (or replay a saved plan)
    prune      tile-prune a model at one sparsity and write the mask / zeroed model
    sweep      write a CSV of tile-pruning losses over tile shapes and sparsities
    verify     check that a candidate model computes the same function as the original

Exit codes: 0 success, 2 configuration error, 3 data error, 4 internal error.
"""

import argparse
import json
import logging
import sys
from typing import List, Optional

from src.errors import TilewiseError
from src.pipeline.config import RunConfig
from src.pipeline.runner import create_pipeline_runner

logger = logging.getLogger("tilewise")

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def configure_logging(verbose: bool = False, log_file: Optional[str] = None) -> None:
    """Attach the stream handler, plus a file handler when a log file is requested"""
    handlers: List[logging.Handler] = [logging.StreamHandler()]
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format=LOG_FORMAT,
        handlers=handlers,
        force=True,
    )


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--model", required=True, help="Model manifest (JSON); the blob is read from the .bin beside it")
    parser.add_argument("--criterion", default="l1", choices=["l1", "l2"], help="Importance criterion")
    parser.add_argument("--seed", type=int, default=0, help="Seed for every stochastic component")
    parser.add_argument("--log-file", help="Also write logs to this file")
    parser.add_argument("--verbose", action="store_true", help="Debug logging")


def _add_transform_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--transform", default="none", choices=["none", "row", "column"],
                        help="TileTrans mode applied before pruning")
    parser.add_argument("--plan-in", help="Replay a saved transform plan instead of building one")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tilewise", description="Tile pruning with TileTrans reparameterization")
    commands = parser.add_subparsers(dest="command", required=True)

    transform = commands.add_parser("transform", help="Reparameterize a model")
    _add_common(transform)
    _add_transform_flags(transform)
    transform.add_argument("--model-out", help="Where to write the transformed model")
    transform.add_argument("--plan-out", help="Where to write the transform plan (JSON)")

    prune = commands.add_parser("prune", help="Tile-prune a model at one sparsity")
    _add_common(prune)
    _add_transform_flags(prune)
    prune.add_argument("--tile", default="16x16", help="Tile shape AxB")
    prune.add_argument("--sparsity", default="0.5", help="Target sparsity in [0, 1]")
    prune.add_argument("--mask-out", help="Where to write the mask (JSON)")
    prune.add_argument("--model-out", help="Where to write the zeroed model")
    prune.add_argument("--report", help="Where to write a one-row loss CSV")

    sweep = commands.add_parser("sweep", help="Loss report over tile shapes and sparsities")
    _add_common(sweep)
    _add_transform_flags(sweep)
    sweep.add_argument("--tile", default="16x16", help="Tile shape AxB, comma list, or 'accelerator'")
    sweep.add_argument("--sparsity", default="0:1:0.1", help="LIST or START:STOP:STEP")
    sweep.add_argument("--report", required=True, help="Where to write the CSV report")
    sweep.add_argument("--per-layer", action="store_true", help="Add one row per layer to every sweep point")
    sweep.add_argument("--summary", help="Where to write the per-point gap summary CSV")

    verify = commands.add_parser("verify", help="Check function preservation between two models")
    _add_common(verify)
    verify.add_argument("--candidate", required=True, help="Transformed model manifest")
    verify.add_argument("--samples", type=int, default=100, help="Number of random inputs")
    verify.add_argument("--rtol", type=float, default=1e-5, help="Relative tolerance")
    verify.add_argument("--input-shape", help="Comma-separated shape of one input sample, e.g. 3,8,8")

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose, args.log_file)

    runner = None
    try:
        config = RunConfig.from_args(args)
        runner = create_pipeline_runner(config)
        result = runner.run()
    except TilewiseError as e:
        stage = e.stage or (runner.current_stage if runner else "config")
        print(f"tilewise: error in stage '{stage}': {e.message}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        stage = runner.current_stage if runner and runner.current_stage else "unknown"
        logger.exception(f"Unexpected error in stage '{stage}'")
        print(f"tilewise: error in stage '{stage}': {e}", file=sys.stderr)
        return 4

    summary = {key: value for key, value in result.items() if key != "frame"}
    print(json.dumps(summary, indent=2, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
