# Graph Module

from .model_graph import INPUT, OUTPUT, AffineParams, LayerKind, LayerNode, WeightGraph, WeightTensor
from .serialization import load_graph, save_graph
from .layer_groups import LayerGroup, build_layer_groups, effective_children, effective_parents

__all__ = [
    'INPUT',
    'OUTPUT',
    'AffineParams',
    'LayerKind',
    'LayerNode',
    'WeightGraph',
    'WeightTensor',
    'load_graph',
    'save_graph',
    'LayerGroup',
    'build_layer_groups',
    'effective_children',
    'effective_parents',
]
