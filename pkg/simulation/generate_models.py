#!/usr/bin/env python3
"""
Fixture Model Writer for tilewise

Writes every fixture model (chain, residual, alexnet, resnet, synthetic) as a
manifest + blob pair so the command-line sweeps have something to run on:

    python -m simulation.generate_models --output-dir models --seed 0
    tilewise sweep --model models/synthetic.json --tile 2x2,4x4 --transform row --report out.csv
"""

import argparse
import logging
import os
from typing import Dict, List, Optional

from simulation.data_generator import ModelGenerator, build_fixtures
from src.graph.serialization import save_graph

logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    handlers=[logging.StreamHandler()]
)

logger = logging.getLogger(__name__)


def write_fixtures(output_dir: str, seed: int = 0, integer: bool = False,
                   names: Optional[List[str]] = None, synthetic_layers: int = 16,
                   synthetic_width: int = 64) -> Dict[str, str]:
    """
    Save fixture models to a directory.

    Args:
        output_dir: Target directory (created if missing)
        seed: Weight seed
        integer: Use small integer weights
        names: Subset of fixture names; all when omitted
        synthetic_layers: Layer count of the synthetic model
        synthetic_width: Layer width of the synthetic model

    Returns:
        Fixture name -> manifest path
    """
    os.makedirs(output_dir, exist_ok=True)
    fixtures = build_fixtures(seed, integer)
    fixtures["synthetic"] = ModelGenerator(seed, integer).synthetic_model(synthetic_layers, synthetic_width)

    written = {}
    for name, graph in fixtures.items():
        if names and name not in names:
            continue
        path = os.path.join(output_dir, f"{name}.json")
        save_graph(graph, path)
        written[name] = path
        logger.info(f"Wrote {name} fixture to {path}")
    return written


def main():
    """Main function for the fixture writer."""
    parser = argparse.ArgumentParser(description="Write tilewise fixture models")

    parser.add_argument("--output-dir", type=str, default="models", help="Directory to save models")
    parser.add_argument("--seed", type=int, default=0, help="Random seed for reproducibility")
    parser.add_argument("--integer", action="store_true", help="Use small integer weights")
    parser.add_argument("--only", type=str, help="Comma-separated fixture names")
    parser.add_argument("--layers", type=int, default=16, help="Synthetic model depth")
    parser.add_argument("--width", type=int, default=64, help="Synthetic model width")

    args = parser.parse_args()
    names = [n.strip() for n in args.only.split(",")] if args.only else None
    written = write_fixtures(args.output_dir, args.seed, args.integer, names, args.layers, args.width)
    logger.info(f"Wrote {len(written)} fixture models to {args.output_dir}")


if __name__ == "__main__":
    main()
