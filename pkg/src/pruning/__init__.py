# Pruning Module

from .importance import ImportanceCriterion, TileGrid, TileShape, element_scores, tile_scores
from .mask import PruneMask, PrunePlan, load_mask, save_mask
from .pruner import apply_mask, tile_prune, unstructured_prune
from .loss import LossReport, loss_difference, pruning_loss

__all__ = [
    'ImportanceCriterion',
    'TileGrid',
    'TileShape',
    'element_scores',
    'tile_scores',
    'PruneMask',
    'PrunePlan',
    'load_mask',
    'save_mask',
    'apply_mask',
    'tile_prune',
    'unstructured_prune',
    'LossReport',
    'loss_difference',
    'pruning_loss',
]
