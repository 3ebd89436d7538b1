# -*- coding: utf-8 -*-
"""
Reference Evaluator Module

A naive forward pass over a WeightGraph used as a correctness oracle. Every
node is executed in topological order in float64; conv layers are lowered to
a matrix multiply over im2col patches so that they use exactly the 2D weight
view the rest of the toolkit operates on.

Activations are batch-first: (N, features) after linear and flatten layers,
(N, C, H, W) around conv and pool layers.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from src.errors import ConfigError, ShapeError
from src.graph.model_graph import LayerKind, LayerNode, WeightGraph

logger = logging.getLogger(__name__)


@dataclass
class EvalInput:
    """A batch of model inputs; every graph input node receives the same tensor"""

    values: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim not in (2, 4):
            raise ShapeError(f"input batch must be (N, F) or (N, C, H, W), got shape {self.values.shape}")

    @property
    def samples(self) -> int:
        return int(self.values.shape[0])

    @classmethod
    def single(cls, sample: Sequence[float]) -> "EvalInput":
        return cls(np.asarray(sample, dtype=np.float64)[None, ...])


def _im2col(x: np.ndarray, kernel_h: int, kernel_w: int, stride: int, padding: int) -> np.ndarray:
    """(N, C, H, W) -> (N * H_out * W_out, C * kh * kw), columns ordered channel, then kernel row, then kernel col"""
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    n, c, h, w = x.shape
    if h < kernel_h or w < kernel_w:
        raise ShapeError(f"input {h}x{w} is smaller than the {kernel_h}x{kernel_w} kernel")
    windows = sliding_window_view(x, (kernel_h, kernel_w), axis=(2, 3))[:, :, ::stride, ::stride]
    h_out, w_out = windows.shape[2], windows.shape[3]
    return windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * h_out * w_out, c * kernel_h * kernel_w)


def _conv2d(node: LayerNode, x: np.ndarray) -> np.ndarray:
    if x.ndim != 4 or x.shape[1] != int(node.meta["in_channels"]):
        raise ShapeError(f"conv2d node {node.id} expects (N, {node.meta['in_channels']}, H, W), got {x.shape}")
    kernel_h, kernel_w = int(node.meta["kernel_h"]), int(node.meta["kernel_w"])
    stride = int(node.meta.get("stride", 1))
    padding = int(node.meta.get("padding", 0))
    n, _, h, w = x.shape
    h_out = (h + 2 * padding - kernel_h) // stride + 1
    w_out = (w + 2 * padding - kernel_w) // stride + 1

    columns = _im2col(x, kernel_h, kernel_w, stride, padding)
    out = columns @ node.weight.data.astype(np.float64).T
    if node.weight.bias is not None:
        out = out + node.weight.bias.astype(np.float64)
    return out.reshape(n, h_out, w_out, node.weight.rows).transpose(0, 3, 1, 2)


def _linear(node: LayerNode, x: np.ndarray) -> np.ndarray:
    if x.ndim != 2 or x.shape[1] != node.weight.cols:
        raise ShapeError(f"linear node {node.id} expects (N, {node.weight.cols}), got {x.shape}")
    out = x @ node.weight.data.astype(np.float64).T
    if node.weight.bias is not None:
        out = out + node.weight.bias.astype(np.float64)
    return out


def _max_pool(node: LayerNode, x: np.ndarray) -> np.ndarray:
    if x.ndim != 4:
        raise ShapeError(f"pool node {node.id} expects (N, C, H, W), got {x.shape}")
    kernel = int(node.meta.get("kernel", 2))
    stride = int(node.meta.get("stride", kernel))
    if x.shape[2] < kernel or x.shape[3] < kernel:
        raise ShapeError(f"pool node {node.id}: input {x.shape[2]}x{x.shape[3]} smaller than kernel {kernel}")
    windows = sliding_window_view(x, (kernel, kernel), axis=(2, 3))[:, :, ::stride, ::stride]
    return windows.max(axis=(4, 5))


def _flatten(node: LayerNode, x: np.ndarray) -> np.ndarray:
    if x.ndim == 2:
        if node.spatial_area != 1:
            raise ShapeError(f"flatten node {node.id} expects spatial area {node.spatial_area}, got 1")
        return x
    if x.ndim != 4 or x.shape[2] * x.shape[3] != node.spatial_area:
        raise ShapeError(f"flatten node {node.id} expects spatial area {node.spatial_area}, got {x.shape}")
    return x.reshape(x.shape[0], -1)


def _affine(node: LayerNode, x: np.ndarray) -> np.ndarray:
    if x.shape[1] != node.affine.channels:
        raise ShapeError(f"affine node {node.id} has {node.affine.channels} channels, input {x.shape}")
    shape = (1, -1) + (1,) * (x.ndim - 2)
    scale = node.affine.scale.astype(np.float64).reshape(shape)
    shift = node.affine.shift.astype(np.float64).reshape(shape)
    return x * scale + shift


def _run_node(node: LayerNode, sources: List[np.ndarray]) -> np.ndarray:
    if node.kind == LayerKind.ADD:
        shapes = {s.shape for s in sources}
        if len(shapes) != 1:
            raise ShapeError(f"add node {node.id} receives differing shapes {sorted(shapes)}")
        return np.sum(sources, axis=0)
    if len(sources) != 1:
        raise ShapeError(f"{node.kind.value} node {node.id} receives {len(sources)} inputs")

    x = sources[0]
    if node.kind == LayerKind.LINEAR:
        return _linear(node, x)
    if node.kind == LayerKind.CONV2D:
        return _conv2d(node, x)
    if node.kind == LayerKind.ELEMENTWISE:
        return np.maximum(x, 0.0)
    if node.kind == LayerKind.POOL:
        return _max_pool(node, x)
    if node.kind == LayerKind.FLATTEN:
        return _flatten(node, x)
    return _affine(node, x)


def evaluate(graph: WeightGraph, x: EvalInput) -> np.ndarray:
    """
    Run the model on a batch of inputs

    Args:
        graph: Model graph
        x: Input batch fed to every input node

    Returns:
        (N, total output features) array; multiple outputs are flattened and
        concatenated in output_ids order
    """
    activations: Dict[int, np.ndarray] = {}
    for node_id in graph.topological_order():
        node = graph.node(node_id)
        sources = [x.values] if node_id in graph.input_ids else []
        sources += [activations[p] for p in graph.predecessors(node_id)]
        activations[node_id] = _run_node(node, sources)

    outputs = [activations[i].reshape(x.samples, -1) for i in graph.output_ids]
    return np.concatenate(outputs, axis=1)


def input_shape(graph: WeightGraph) -> tuple:
    """Per-sample input shape: meta 'input_shape' of an input node, else the width a linear input expects"""
    for node_id in graph.input_ids:
        node = graph.node(node_id)
        if "input_shape" in node.meta:
            return tuple(int(d) for d in node.meta["input_shape"])
    for node_id in graph.input_ids:
        node = graph.node(node_id)
        if node.kind == LayerKind.LINEAR:
            return (node.weight.cols,)
        if node.kind == LayerKind.AFFINE:
            return (node.affine.channels,)
    raise ConfigError("cannot infer the model input shape; pass it explicitly")


def random_input(graph: WeightGraph,
                 shape: Optional[Sequence[int]] = None,
                 samples: int = 100,
                 seed: int = 0) -> EvalInput:
    """
    Draw a standard-normal input batch

    Args:
        graph: Model graph
        shape: Shape of one sample; inferred from the graph when omitted
        samples: Batch size
        seed: Random seed

    Returns:
        EvalInput of shape (samples, *shape)
    """
    if samples < 1:
        raise ConfigError(f"samples must be positive, got {samples}")
    sample_shape = tuple(shape) if shape is not None else input_shape(graph)
    rng = np.random.default_rng(seed)
    values = rng.standard_normal((samples,) + sample_shape)
    logger.debug(f"Drew {samples} random inputs of shape {sample_shape} (seed {seed})")
    return EvalInput(values, seed)
