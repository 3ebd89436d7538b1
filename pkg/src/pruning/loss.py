# -*- coding: utf-8 -*-
"""
Pruning Loss Module

Pruning loss is the summed importance of deleted elements. The tile-vs-
unstructured difference compares tile pruning with the best possible
element-wise pruning that deletes the same number of elements.

Sums use math.fsum (exactly rounded), so a loss depends only on the multiset
of deleted scores and never on traversal order.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, Optional, Union

import numpy as np

from src.errors import ShapeError
from src.pruning.importance import ImportanceCriterion, ScoreSet, TileShape, score_set
from src.pruning.mask import PruneMask, PrunePlan
from src.pruning.pruner import prune_scores

logger = logging.getLogger(__name__)

CSV_COLUMNS = [
    "model",
    "layer_set",
    "tile_a",
    "tile_b",
    "sparsity",
    "criterion",
    "loss",
    "baseline_loss",
    "difference",
    "transformed",
]

KeepSet = Union[PruneMask, Mapping[int, np.ndarray]]


@dataclass
class LossReport:
    """Tile-pruning loss against the unstructured baseline at equal sparsity"""

    loss: float
    baseline_loss: float
    difference: float
    tile_shape: TileShape = field(default_factory=lambda: TileShape(1, 1))
    sparsity: float = 0.0
    criterion: ImportanceCriterion = ImportanceCriterion.L1
    total_score: Optional[float] = None
    retained_score: Optional[float] = None
    achieved_sparsity: Optional[float] = None
    model: str = ""
    layer_set: str = "all"
    transformed: bool = False

    def to_csv_row(self) -> Dict[str, Any]:
        return {
            "model": self.model,
            "layer_set": self.layer_set,
            "tile_a": self.tile_shape.a,
            "tile_b": self.tile_shape.b,
            "sparsity": self.sparsity,
            "criterion": self.criterion.value,
            "loss": self.loss,
            "baseline_loss": self.baseline_loss,
            "difference": self.difference,
            "transformed": self.transformed,
        }

    @classmethod
    def from_csv_row(cls, row: Mapping[str, Any]) -> "LossReport":
        transformed = row["transformed"]
        if isinstance(transformed, str):
            transformed = transformed.strip().lower() == "true"
        return cls(
            loss=float(row["loss"]),
            baseline_loss=float(row["baseline_loss"]),
            difference=float(row["difference"]),
            tile_shape=TileShape(int(row["tile_a"]), int(row["tile_b"])),
            sparsity=float(row["sparsity"]),
            criterion=ImportanceCriterion.parse(row["criterion"]),
            model=str(row["model"]),
            layer_set=str(row["layer_set"]),
            transformed=bool(transformed),
        )


def _keep_arrays(scores: ScoreSet, mask: KeepSet) -> Dict[int, np.ndarray]:
    keep = mask.element_masks() if isinstance(mask, PruneMask) else dict(mask)
    if set(keep) != set(scores):
        raise ShapeError(f"mask layers {sorted(keep)} do not match score layers {sorted(scores)}")
    for layer_id, s in scores.items():
        if np.shape(keep[layer_id]) != s.shape:
            raise ShapeError(f"layer {layer_id}: mask {np.shape(keep[layer_id])} vs scores {s.shape}")
    return {layer_id: np.asarray(keep[layer_id], dtype=bool) for layer_id in scores}


def total_score(scores: ScoreSet) -> float:
    return math.fsum(np.concatenate([s.ravel() for s in scores.values()])) if scores else 0.0


def pruning_loss(scores: ScoreSet, mask: KeepSet) -> float:
    """
    Summed importance of deleted elements

    Args:
        scores: Layer id -> element scores
        mask: PruneMask or layer id -> element keep flags (True = keep)

    Returns:
        Total score minus retained score
    """
    keep = _keep_arrays(scores, mask)
    deleted = [scores[i][~keep[i]] for i in scores]
    return math.fsum(np.concatenate(deleted)) if deleted else 0.0


def loss_by_layer(scores: ScoreSet, mask: KeepSet) -> Dict[int, float]:
    """Pruning loss broken down per layer"""
    keep = _keep_arrays(scores, mask)
    return {i: math.fsum(scores[i][~keep[i]]) for i in scores}


def unstructured_loss(scores: ScoreSet, deleted_count: int) -> float:
    """Smallest possible loss of deleting exactly deleted_count elements"""
    if deleted_count <= 0 or not scores:
        return 0.0
    flat = np.sort(np.concatenate([s.ravel() for s in scores.values()]), kind="stable")
    return math.fsum(flat[:deleted_count])


def report_for_mask(scores: ScoreSet, mask: PruneMask) -> LossReport:
    """Loss of an existing mask against the unstructured baseline at the mask's achieved sparsity"""
    total = total_score(scores)
    loss = pruning_loss(scores, mask)
    keep = _keep_arrays(scores, mask)
    retained = math.fsum(np.concatenate([scores[i][keep[i]] for i in scores])) if scores else 0.0
    deleted = sum(int(np.count_nonzero(~k)) for k in keep.values())
    baseline = unstructured_loss(scores, deleted)
    elements = sum(s.size for s in scores.values())
    return LossReport(
        loss=loss,
        baseline_loss=baseline,
        difference=loss - baseline,
        tile_shape=mask.plan.tile_shape,
        sparsity=mask.plan.sparsity,
        criterion=mask.plan.criterion,
        total_score=total,
        retained_score=retained,
        achieved_sparsity=deleted / elements if elements else 0.0,
    )


def loss_difference(weights: Any,
                    tile_shape: TileShape,
                    sparsity: float,
                    criterion: ImportanceCriterion = ImportanceCriterion.L1) -> LossReport:
    """
    Tile-pruning loss minus unstructured-pruning loss at the same sparsity

    Args:
        weights: WeightGraph, mapping of layer id to matrix, or sequence of matrices
        tile_shape: Tile shape for the structured side
        sparsity: Target sparsity in [0, 1]
        criterion: Importance criterion

    Returns:
        LossReport; difference >= 0 always
    """
    plan = PrunePlan(tile_shape, sparsity, criterion)
    scores = score_set(weights, plan.criterion)
    return report_for_mask(scores, prune_scores(scores, plan))
