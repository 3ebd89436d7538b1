# -*- coding: utf-8 -*-
"""
Prune plans and tile-granularity masks, with their JSON file format.
"""

import json
import logging
import math
import os
from dataclasses import dataclass, replace
from typing import Any, Dict, List, Mapping, Tuple

import numpy as np

from src.errors import ConfigError, ManifestParseError, ShapeError
from src.graph.model_graph import WeightGraph
from src.pruning.importance import ImportanceCriterion, TileShape

logger = logging.getLogger(__name__)

TIE_BREAK = "layer,tile_row,tile_col"


@dataclass(frozen=True)
class PrunePlan:
    """Tile shape, target sparsity and criterion of one pruning pass"""

    tile_shape: TileShape
    sparsity: float
    criterion: ImportanceCriterion = ImportanceCriterion.L1
    tie_break: str = TIE_BREAK

    def __post_init__(self):
        sparsity = float(self.sparsity)
        if math.isnan(sparsity) or not 0.0 <= sparsity <= 1.0:
            raise ConfigError(f"sparsity must lie in [0, 1], got {self.sparsity}")
        if self.tie_break != TIE_BREAK:
            raise ConfigError(f"unsupported tie-break rule {self.tie_break!r}")
        object.__setattr__(self, "sparsity", sparsity)
        object.__setattr__(self, "criterion", ImportanceCriterion.parse(self.criterion))

    def unstructured(self) -> "PrunePlan":
        return replace(self, tile_shape=TileShape(1, 1))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "tile_a": self.tile_shape.a,
            "tile_b": self.tile_shape.b,
            "sparsity": self.sparsity,
            "criterion": self.criterion.value,
            "tie_break": self.tie_break,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PrunePlan":
        try:
            return cls(
                tile_shape=TileShape(data["tile_a"], data["tile_b"]),
                sparsity=data["sparsity"],
                criterion=data.get("criterion", "l1"),
                tie_break=data.get("tie_break", TIE_BREAK),
            )
        except KeyError as e:
            raise ManifestParseError(f"prune plan is missing {e}") from None
        except (ConfigError, TypeError, ValueError) as e:
            raise ManifestParseError(f"invalid prune plan: {e}") from e


class PruneMask:
    """Per-layer keep flags at tile granularity (True = keep)"""

    def __init__(self,
                 plan: PrunePlan,
                 tile_keep: Mapping[int, np.ndarray],
                 layer_shapes: Mapping[int, Tuple[int, int]]):
        self.plan = plan
        self.tile_keep: Dict[int, np.ndarray] = {}
        self.layer_shapes: Dict[int, Tuple[int, int]] = {}
        for layer_id, (rows, cols) in layer_shapes.items():
            expected = plan.tile_shape.grid_dims(rows, cols)
            if layer_id not in tile_keep:
                raise ShapeError(f"tile mask has no entry for layer {layer_id}")
            keep = np.asarray(tile_keep[layer_id], dtype=bool)
            if keep.shape != expected:
                raise ShapeError(f"layer {layer_id}: tile mask {keep.shape} does not match grid {expected}")
            self.tile_keep[int(layer_id)] = keep
            self.layer_shapes[int(layer_id)] = (int(rows), int(cols))

    @classmethod
    def all_keep(cls, graph: WeightGraph, plan: PrunePlan) -> "PruneMask":
        shapes = {i: (w.rows, w.cols) for i, w in graph.weights().items()}
        keep = {i: np.ones(plan.tile_shape.grid_dims(*shape), dtype=bool) for i, shape in shapes.items()}
        return cls(plan, keep, shapes)

    @property
    def layer_ids(self) -> List[int]:
        return list(self.layer_shapes)

    def element_keep(self, layer_id: int) -> np.ndarray:
        rows, cols = self.layer_shapes[layer_id]
        return self.plan.tile_shape.expand(self.tile_keep[layer_id], rows, cols)

    def element_masks(self) -> Dict[int, np.ndarray]:
        return {layer_id: self.element_keep(layer_id) for layer_id in self.layer_shapes}

    @property
    def total_elements(self) -> int:
        return sum(rows * cols for rows, cols in self.layer_shapes.values())

    @property
    def deleted_elements(self) -> int:
        return sum(int(np.count_nonzero(~self.element_keep(i))) for i in self.layer_shapes)

    @property
    def achieved_sparsity(self) -> float:
        total = self.total_elements
        return self.deleted_elements / total if total else 0.0

    def deleted_tiles(self, layer_id: int) -> np.ndarray:
        """Flat row-major indices of deleted tiles"""
        return np.flatnonzero(~self.tile_keep[layer_id].ravel())

    def kept_tiles(self, layer_id: int) -> np.ndarray:
        return np.flatnonzero(self.tile_keep[layer_id].ravel())

    def check_matches(self, graph: WeightGraph) -> None:
        shapes = {i: (w.rows, w.cols) for i, w in graph.weights().items()}
        if shapes != self.layer_shapes:
            raise ShapeError(f"mask covers layers {sorted(self.layer_shapes)} with shapes that do not "
                             f"match the graph's weighted layers {sorted(shapes)}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "plan": self.plan.to_dict(),
            "layers": {
                str(layer_id): {
                    "rows": rows,
                    "cols": cols,
                    "kept_tiles": [int(i) for i in self.kept_tiles(layer_id)],
                }
                for layer_id, (rows, cols) in self.layer_shapes.items()
            },
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PruneMask":
        if not isinstance(data, dict) or "plan" not in data or "layers" not in data:
            raise ManifestParseError("mask file needs 'plan' and 'layers'")
        plan = PrunePlan.from_dict(data["plan"])
        keep: Dict[int, np.ndarray] = {}
        shapes: Dict[int, Tuple[int, int]] = {}
        try:
            for key, entry in data["layers"].items():
                layer_id = int(key)
                rows, cols = int(entry["rows"]), int(entry["cols"])
                if rows < 0 or cols < 0:
                    raise ValueError(f"negative shape {rows}x{cols}")
                grid = plan.tile_shape.grid_dims(rows, cols)
                flat = np.zeros(grid[0] * grid[1], dtype=bool)
                kept = np.asarray(entry["kept_tiles"], dtype=np.int64).reshape(-1)
                if kept.size and (kept.min() < 0 or kept.max() >= flat.size):
                    raise ShapeError(f"layer {layer_id}: kept tile index out of range")
                flat[kept] = True
                keep[layer_id] = flat.reshape(grid)
                shapes[layer_id] = (rows, cols)
        except (AttributeError, KeyError, TypeError, ValueError) as e:
            raise ManifestParseError(f"malformed mask layer entry: {e!r}") from e
        return cls(plan, keep, shapes)

    def __repr__(self) -> str:
        return (f"PruneMask({len(self.layer_shapes)} layers, tile {self.plan.tile_shape}, "
                f"sparsity {self.achieved_sparsity:.4f})")


def save_mask(mask: PruneMask, path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(mask.to_dict(), f, indent=2)
        f.write("\n")
    logger.info(f"Saved {mask!r} to {path}")


def load_mask(path: str) -> PruneMask:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ManifestParseError(f"{path}: cannot read mask ({e})") from e
    return PruneMask.from_dict(data)
