"""
Model Generator for tilewise Simulation

This module builds small fixture models for testing and for command-line
sweeps: linear chains, the residual block where two layers meet in an add,
AlexNet-like and ResNet-like conv stacks, multi-layer synthetic models whose
rows follow a normal distribution of means, and random residual DAGs.

Every builder is reproducible from the generator's seed. With integer=True the
weights are small integers, so forward passes are exact in float64.
"""

import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.graph.model_graph import AffineParams, LayerKind, LayerNode, WeightGraph, WeightTensor
from src.verification.synthetic import SyntheticSpec, gen_synthetic

logger = logging.getLogger(__name__)


class ModelGenerator:
    """
    Generates fixture WeightGraphs.

    Each build method appends nodes and edges through a small builder and
    returns a validated graph.
    """

    def __init__(self, seed: Optional[int] = 0, integer: bool = False):
        """
        Initialize the model generator.

        Args:
            seed: Random seed for reproducible weights
            integer: Draw small integer weights instead of scaled normals
        """
        self.rng = np.random.default_rng(seed)
        self.integer = integer
        self._reset()

    def _reset(self) -> None:
        self.nodes: List[LayerNode] = []
        self.edges: List[Tuple[int, int]] = []

    def _values(self, shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
        if self.integer:
            return self.rng.integers(-3, 4, size=shape).astype(np.float32)
        return (self.rng.standard_normal(shape) / np.sqrt(fan_in)).astype(np.float32)

    def _add_node(self, kind: LayerKind, sources: Sequence[int], **kwargs) -> int:
        node_id = len(self.nodes)
        self.nodes.append(LayerNode(node_id, kind, **kwargs))
        self.edges.extend((src, node_id) for src in sources)
        return node_id

    def linear(self, source: Optional[int], rows: int, cols: int, bias: bool = True) -> int:
        weight = WeightTensor(self._values((rows, cols), cols),
                              self._values((rows,), cols) if bias else None)
        return self._add_node(LayerKind.LINEAR, [] if source is None else [source], weight=weight)

    def conv(self, source: Optional[int], out_channels: int, in_channels: int, kernel: int = 3,
             padding: int = 1, stride: int = 1, input_shape: Optional[Sequence[int]] = None) -> int:
        cols = in_channels * kernel * kernel
        weight = WeightTensor(self._values((out_channels, cols), cols), self._values((out_channels,), cols))
        meta = {
            "in_channels": in_channels,
            "out_channels": out_channels,
            "kernel_h": kernel,
            "kernel_w": kernel,
            "padding": padding,
            "stride": stride,
        }
        if input_shape is not None:
            meta["input_shape"] = list(input_shape)
        return self._add_node(LayerKind.CONV2D, [] if source is None else [source], weight=weight, meta=meta)

    def relu(self, source: int) -> int:
        return self._add_node(LayerKind.ELEMENTWISE, [source])

    def add(self, *sources: int) -> int:
        return self._add_node(LayerKind.ADD, sources)

    def pool(self, source: int, kernel: int = 2) -> int:
        return self._add_node(LayerKind.POOL, [source], meta={"kernel": kernel, "stride": kernel})

    def flatten(self, source: int, spatial_area: int) -> int:
        return self._add_node(LayerKind.FLATTEN, [source], meta={"spatial_area": spatial_area})

    def affine(self, source: int, channels: int) -> int:
        if self.integer:
            scale = self.rng.integers(1, 3, size=channels)
            shift = self.rng.integers(-2, 3, size=channels)
        else:
            scale = self.rng.uniform(0.5, 1.5, size=channels)
            shift = self.rng.normal(0.0, 0.1, size=channels)
        return self._add_node(LayerKind.AFFINE, [source], affine=AffineParams(scale, shift))

    def _finish(self, inputs: Sequence[int], outputs: Sequence[int], name: str) -> WeightGraph:
        graph = WeightGraph(self.nodes, self.edges, inputs, outputs)
        self._reset()
        logger.debug(f"Built {name} fixture: {graph!r}")
        return graph

    # ------------------------------------------------------------------ models

    def chain_model(self, widths: Sequence[int] = (8, 16, 16, 4)) -> WeightGraph:
        """
        Linear layers joined by ReLUs.

        Args:
            widths: Input width followed by each layer's output width

        Returns:
            Graph with len(widths) - 1 linear layers
        """
        current = None
        for index, (cols, rows) in enumerate(zip(widths[:-1], widths[1:])):
            if index:
                current = self.relu(current)
            current = self.linear(current, rows, cols)
        return self._finish([0], [current], "chain")

    def residual_model(self, width: int = 8, in_width: int = 4, out_width: int = 3) -> WeightGraph:
        """
        Stem S, then A -> B -> C with the output of A added to the output of C before D.

        Node ids: S=0, A=2, B=4, C=6, add=7, D=8. A and C feed the same add and
        therefore form one layer group.
        """
        stem = self.linear(None, width, in_width)
        a = self.linear(self.relu(stem), width, width)
        a_out = self.relu(a)
        b = self.linear(a_out, width, width)
        c = self.linear(self.relu(b), width, width)
        d = self.linear(self.add(a_out, c), out_width, width)
        return self._finish([stem], [d], "residual")

    def alexnet_like(self, channels: int = 3, size: int = 16, classes: int = 10) -> WeightGraph:
        """Five conv layers and three linear layers with ReLU, max pooling and one flatten"""
        x = self.conv(None, 8, channels, input_shape=(channels, size, size))
        x = self.pool(self.relu(x))
        x = self.pool(self.relu(self.conv(x, 16, 8)))
        x = self.relu(self.conv(x, 16, 16))
        x = self.relu(self.conv(x, 16, 16))
        x = self.pool(self.relu(self.conv(x, 16, 16)))
        area = (size // 8) ** 2
        x = self.flatten(x, area)
        x = self.relu(self.linear(x, 32, 16 * area))
        x = self.relu(self.linear(x, 32, 32))
        x = self.linear(x, classes, 32)
        return self._finish([0], [x], "alexnet-like")

    def resnet_like(self, channels: int = 3, size: int = 8, width: int = 8, blocks: int = 2,
                    classes: int = 10) -> WeightGraph:
        """
        Stem convs followed by residual blocks (conv, relu, conv, affine, add, relu),
        then pooling, a flatten and a linear classifier.
        """
        x = self.relu(self.conv(None, width, channels, input_shape=(channels, size, size)))
        stream = self.relu(self.conv(x, width, width))
        for _ in range(blocks):
            y = self.relu(self.conv(stream, width, width))
            y = self.affine(self.conv(y, width, width), width)
            stream = self.relu(self.add(stream, y))
        x = self.pool(stream)
        area = (size // 2) ** 2
        x = self.linear(self.flatten(x, area), classes, width * area)
        return self._finish([0], [x], "resnet-like")

    def synthetic_model(self, layers: int = 16, width: int = 64, mu: float = 0.0,
                        sigma: float = 1.0, epsilon: float = 0.05) -> WeightGraph:
        """Chain of square linear layers whose weights are drawn by gen_synthetic"""
        current = None
        for index in range(layers):
            spec = SyntheticSpec(width, width, mu, sigma, epsilon, seed=None)
            weight = gen_synthetic(spec, self.rng)
            if index:
                current = self.relu(current)
            current = self._add_node(LayerKind.LINEAR, [] if current is None else [current], weight=weight)
        return self._finish([0], [current], "synthetic")

    def random_residual_dag(self, max_nodes: int = 20, width: int = 6) -> WeightGraph:
        """
        Random DAG of equal-width linear layers, ReLUs and adds grown from one input layer.

        Args:
            max_nodes: Upper bound on the node count (the final output layer included)
            width: Width of every layer

        Returns:
            Graph whose output layer reads the most recently created node
        """
        max_nodes = max(3, max_nodes)
        created = [self.linear(None, width, width)]
        target = int(self.rng.integers(3, max_nodes + 1))
        while len(self.nodes) < target - 1:
            choice = self.rng.random()
            source = created[int(self.rng.integers(len(created)))]
            if choice < 0.5:
                created.append(self.linear(source, width, width))
            elif choice < 0.7:
                created.append(self.relu(source))
            elif len(created) > 1:
                other = created[int(self.rng.integers(len(created)))]
                if other == source:
                    continue
                created.append(self.add(source, other))
        output = self.linear(created[-1], width, width)
        return self._finish([0], [output], "random-dag")


def build_fixtures(seed: int = 0, integer: bool = False) -> Dict[str, WeightGraph]:
    """Every named fixture model, built with one generator per model"""
    return {
        "chain": ModelGenerator(seed, integer).chain_model(),
        "residual": ModelGenerator(seed, integer).residual_model(),
        "alexnet": ModelGenerator(seed, integer).alexnet_like(),
        "resnet": ModelGenerator(seed, integer).resnet_like(),
        "synthetic": ModelGenerator(seed, integer).synthetic_model(),
    }
