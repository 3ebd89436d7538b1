# -*- coding: utf-8 -*-
"""
Tile Pruner Module

Global tile pruning: every tile of every weighted layer enters one pool,
tiles are ranked by mean importance, and the lowest-ranked tiles are deleted
until the element budget of the target sparsity is used up. Unstructured
pruning is the same procedure with 1x1 tiles.
"""

import logging
import math
from typing import Dict, Mapping

import numpy as np

from src.graph.model_graph import WeightGraph
from src.pruning.importance import ScoreSet, TileGrid, score_set, tile_scores
from src.pruning.mask import PruneMask, PrunePlan

logger = logging.getLogger(__name__)


def deletion_budget(sparsity: float, total: int) -> int:
    """Largest element count not exceeding sparsity * total (float noise snapped to the nearest integer)"""
    target = sparsity * total
    nearest = round(target)
    if abs(target - nearest) <= 1e-9 * max(1.0, target):
        return int(nearest)
    return int(math.floor(target))


def select_tiles(grids: Mapping[int, TileGrid], sparsity: float) -> Dict[int, np.ndarray]:
    """
    Choose which tiles survive a global threshold

    Tiles are sorted ascending by mean score, ties broken by (layer id, tile row,
    tile col); the longest prefix whose element total fits the budget is deleted.

    Args:
        grids: Layer id -> tile grid
        sparsity: Target fraction of deleted elements

    Returns:
        Layer id -> boolean tile grid (True = keep)
    """
    keep = {layer_id: np.ones((g.grid_rows, g.grid_cols), dtype=bool) for layer_id, g in grids.items()}
    if not grids:
        return keep

    means, layers, tile_rows, tile_cols, counts = [], [], [], [], []
    for layer_id, grid in grids.items():
        r, c = np.indices((grid.grid_rows, grid.grid_cols))
        means.append(grid.means.ravel())
        layers.append(np.full(grid.num_tiles, layer_id, dtype=np.int64))
        tile_rows.append(r.ravel())
        tile_cols.append(c.ravel())
        counts.append(grid.counts.ravel())

    means_all = np.concatenate(means)
    layers_all = np.concatenate(layers)
    rows_all = np.concatenate(tile_rows)
    cols_all = np.concatenate(tile_cols)
    counts_all = np.concatenate(counts)

    total = int(counts_all.sum())
    budget = deletion_budget(sparsity, total)
    order = np.lexsort((cols_all, rows_all, layers_all, means_all))
    cumulative = np.cumsum(counts_all[order])
    k = int(np.searchsorted(cumulative, budget, side="right"))

    for index in order[:k]:
        keep[int(layers_all[index])][rows_all[index], cols_all[index]] = False

    deleted = int(cumulative[k - 1]) if k else 0
    logger.debug(f"Deleted {k} of {len(order)} tiles ({deleted}/{total} elements, budget {budget})")
    return keep


def prune_scores(scores: ScoreSet, plan: PrunePlan) -> PruneMask:
    """Run tile selection on precomputed element scores"""
    grids = {layer_id: tile_scores(s, plan.tile_shape) for layer_id, s in scores.items()}
    keep = select_tiles(grids, plan.sparsity)
    shapes = {layer_id: s.shape for layer_id, s in scores.items()}
    return PruneMask(plan, keep, shapes)


def tile_prune(graph: WeightGraph, plan: PrunePlan) -> PruneMask:
    """
    Tile-prune every weighted layer of a graph against one global threshold

    Args:
        graph: Model graph
        plan: Tile shape, target sparsity and criterion

    Returns:
        PruneMask whose achieved sparsity is at most the target and within one
        tile's element count of it
    """
    mask = prune_scores(score_set(graph, plan.criterion), plan)
    logger.info(f"Tile pruning {plan.tile_shape} at s={plan.sparsity}: {mask!r}")
    return mask


def unstructured_prune(graph: WeightGraph, plan: PrunePlan) -> PruneMask:
    """Element-granularity pruning; the plan's tile shape is ignored"""
    return tile_prune(graph, plan.unstructured())


def apply_mask(graph: WeightGraph, mask: PruneMask) -> WeightGraph:
    """Return a graph whose deleted elements are exactly zero and all others untouched"""
    mask.check_matches(graph)
    updates = {}
    for layer_id in mask.layer_ids:
        node = graph.node(layer_id)
        keep = mask.element_keep(layer_id)
        if keep.all():
            continue
        data = np.where(keep, node.weight.data, np.float32(0.0)).astype(np.float32)
        updates[layer_id] = node.replace(weight=node.weight.replace(data=data))
    logger.info(f"Zeroed {mask.deleted_elements} weights in {len(updates)} layers")
    return graph.replace_nodes(updates)
