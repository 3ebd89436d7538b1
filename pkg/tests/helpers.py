import numpy as np

from src.graph.model_graph import LayerKind, LayerNode, WeightGraph, WeightTensor


def parallel_graph(*matrices):
    """One stand-alone linear layer per matrix, each both a model input and output"""
    nodes = [LayerNode(i, LayerKind.LINEAR, weight=WeightTensor(np.asarray(m, dtype=np.float32)))
             for i, m in enumerate(matrices)]
    ids = [node.id for node in nodes]
    return WeightGraph(nodes, [], ids, ids)


def linear_chain(*matrices, relu=True):
    """Linear layers applied in sequence, optionally with ReLUs in between"""
    nodes, edges = [], []
    previous = None
    for matrix in matrices:
        if previous is not None and relu:
            nodes.append(LayerNode(len(nodes), LayerKind.ELEMENTWISE))
            edges.append((previous, nodes[-1].id))
            previous = nodes[-1].id
        node = LayerNode(len(nodes), LayerKind.LINEAR, weight=WeightTensor(np.asarray(matrix, dtype=np.float32)))
        if previous is not None:
            edges.append((previous, node.id))
        nodes.append(node)
        previous = node.id
    return WeightGraph(nodes, edges, [0], [previous])
