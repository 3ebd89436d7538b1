# Reparameterization Module

from .permutation import Permutation
from .tiletrans import TransformMode, TransformPlan, apply_transform, build_trans, tiletrans

__all__ = [
    'Permutation',
    'TransformMode',
    'TransformPlan',
    'apply_transform',
    'build_trans',
    'tiletrans',
]
