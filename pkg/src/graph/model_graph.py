# -*- coding: utf-8 -*-
"""
Model Graph Module

This module defines the in-memory representation of a serialized DNN: a
directed acyclic graph of layers, where weighted layers (linear, conv2d) carry
their parameters as 2D matrices and weightless layers (relu, add, pool,
flatten) only route data. Graphs are validated on construction and treated as
immutable afterwards; every transformation produces a new graph.
"""

import logging
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.errors import ManifestParseError, ShapeError, TopologyError

logger = logging.getLogger(__name__)

# Pseudo node ids used by the parent/child analysis
INPUT = -1
OUTPUT = -2


class LayerKind(str, Enum):
    """Kinds of layer nodes understood by the toolkit"""

    LINEAR = "linear"
    CONV2D = "conv2d"
    ELEMENTWISE = "elementwise"
    ADD = "add"
    POOL = "pool"
    FLATTEN = "flatten"
    AFFINE = "per_channel_affine"

    @property
    def is_weighted(self) -> bool:
        return self in (LayerKind.LINEAR, LayerKind.CONV2D)


def _frozen_array(values: Any, ndim: int, what: str) -> np.ndarray:
    array = np.array(values, dtype=np.float32, copy=True)
    if array.ndim != ndim:
        raise ShapeError(f"{what} must be {ndim}-dimensional, got shape {array.shape}")
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class WeightTensor:
    """A layer's parameters viewed as a rows x cols matrix plus an optional per-row bias"""

    data: np.ndarray
    bias: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen_array(self.data, 2, "weight"))
        if self.bias is not None:
            bias = _frozen_array(self.bias, 1, "bias")
            if bias.shape[0] != self.data.shape[0]:
                raise ShapeError(
                    f"bias length {bias.shape[0]} does not match {self.data.shape[0]} rows"
                )
            object.__setattr__(self, "bias", bias)

    @property
    def rows(self) -> int:
        return int(self.data.shape[0])

    @property
    def cols(self) -> int:
        return int(self.data.shape[1])

    @classmethod
    def from_flat(cls, rows: int, cols: int, values: Sequence[float],
                  bias: Optional[Sequence[float]] = None) -> "WeightTensor":
        """Build a tensor from a row-major flat sequence"""
        flat = np.asarray(values, dtype=np.float32)
        if flat.size != rows * cols:
            raise ShapeError(f"expected {rows * cols} values for a {rows}x{cols} tensor, got {flat.size}")
        return cls(flat.reshape(rows, cols), bias)

    def replace(self, data: Optional[np.ndarray] = None,
                bias: Optional[np.ndarray] = None) -> "WeightTensor":
        return WeightTensor(
            self.data if data is None else data,
            self.bias if bias is None else bias,
        )

    def same_values(self, other: "WeightTensor") -> bool:
        """Bit-level equality of data and bias"""
        if self.data.shape != other.data.shape:
            return False
        if self.data.tobytes() != other.data.tobytes():
            return False
        if (self.bias is None) != (other.bias is None):
            return False
        return self.bias is None or self.bias.tobytes() == other.bias.tobytes()


@dataclass(frozen=True, eq=False)
class AffineParams:
    """Per-channel scale and shift of a normalization layer"""

    scale: np.ndarray
    shift: np.ndarray

    def __post_init__(self):
        scale = _frozen_array(self.scale, 1, "scale")
        shift = _frozen_array(self.shift, 1, "shift")
        if scale.shape != shift.shape:
            raise ShapeError(f"scale {scale.shape} and shift {shift.shape} lengths differ")
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "shift", shift)

    @property
    def channels(self) -> int:
        return int(self.scale.shape[0])

    def same_values(self, other: "AffineParams") -> bool:
        return (self.scale.tobytes() == other.scale.tobytes()
                and self.shift.tobytes() == other.shift.tobytes())


_CONV_META = ("in_channels", "out_channels", "kernel_h", "kernel_w")


@dataclass(frozen=True, eq=False)
class LayerNode:
    """A single layer of the model graph"""

    id: int
    kind: LayerKind
    weight: Optional[WeightTensor] = None
    affine: Optional[AffineParams] = None
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "id", int(self.id))
        object.__setattr__(self, "kind", LayerKind(self.kind))
        object.__setattr__(self, "meta", dict(self.meta))
        if self.id < 0:
            raise ManifestParseError(f"node id must be non-negative, got {self.id}")

        if self.kind.is_weighted:
            if self.weight is None:
                raise ManifestParseError(f"{self.kind.value} node {self.id} has no weight")
            if self.affine is not None:
                raise ManifestParseError(f"{self.kind.value} node {self.id} cannot carry affine vectors")
        elif self.weight is not None:
            raise ManifestParseError(f"{self.kind.value} node {self.id} cannot carry a weight")

        if self.kind == LayerKind.AFFINE and self.affine is None:
            raise ManifestParseError(f"per_channel_affine node {self.id} has no scale/shift")
        if self.kind != LayerKind.AFFINE and self.affine is not None:
            raise ManifestParseError(f"{self.kind.value} node {self.id} cannot carry affine vectors")

        if self.kind == LayerKind.CONV2D:
            self._check_conv()
        if self.kind == LayerKind.FLATTEN and int(self.meta.get("spatial_area", 0)) < 1:
            raise ManifestParseError(f"flatten node {self.id} needs a positive spatial_area")

    def _check_conv(self) -> None:
        missing = [key for key in _CONV_META if key not in self.meta]
        if missing:
            raise ManifestParseError(f"conv2d node {self.id} is missing meta {missing}")
        out_channels = int(self.meta["out_channels"])
        lowered_cols = int(self.meta["in_channels"]) * self.kernel_area
        if self.weight.rows != out_channels or self.weight.cols != lowered_cols:
            raise ShapeError(
                f"conv2d node {self.id}: lowered weight is {self.weight.rows}x{self.weight.cols}, "
                f"expected {out_channels}x{lowered_cols}"
            )

    @property
    def is_weighted(self) -> bool:
        return self.kind.is_weighted

    @property
    def kernel_area(self) -> int:
        if self.kind != LayerKind.CONV2D:
            return 1
        return int(self.meta["kernel_h"]) * int(self.meta["kernel_w"])

    @property
    def spatial_area(self) -> int:
        return int(self.meta.get("spatial_area", 1))

    @property
    def declared_in_width(self) -> Optional[int]:
        """Width this node requires from its producers, if fixed by its parameters"""
        if self.kind == LayerKind.LINEAR:
            return self.weight.cols
        if self.kind == LayerKind.CONV2D:
            return int(self.meta["in_channels"])
        if self.kind == LayerKind.AFFINE:
            return self.affine.channels
        return None

    def replace(self, weight: Optional[WeightTensor] = None,
                affine: Optional[AffineParams] = None) -> "LayerNode":
        return LayerNode(
            id=self.id,
            kind=self.kind,
            weight=self.weight if weight is None else weight,
            affine=self.affine if affine is None else affine,
            meta=self.meta,
        )


class WeightGraph:
    """Validated DAG of layers with producer -> consumer edges"""

    def __init__(self,
                 nodes: Iterable[LayerNode],
                 edges: Iterable[Tuple[int, int]],
                 input_ids: Iterable[int],
                 output_ids: Iterable[int]):
        self.nodes: Tuple[LayerNode, ...] = tuple(nodes)
        self.edges: Tuple[Tuple[int, int], ...] = tuple((int(src), int(dst)) for src, dst in edges)
        self.input_ids: Tuple[int, ...] = tuple(int(i) for i in input_ids)
        self.output_ids: Tuple[int, ...] = tuple(int(i) for i in output_ids)

        self._by_id: Dict[int, LayerNode] = {}
        for node in self.nodes:
            if node.id in self._by_id:
                raise TopologyError(f"duplicate node id {node.id}")
            self._by_id[node.id] = node

        self._preds: Dict[int, List[int]] = {node.id: [] for node in self.nodes}
        self._succs: Dict[int, List[int]] = {node.id: [] for node in self.nodes}
        for src, dst in self.edges:
            if src not in self._by_id or dst not in self._by_id:
                raise TopologyError(f"edge ({src}, {dst}) references an unknown node id")
            self._succs[src].append(dst)
            self._preds[dst].append(src)

        self._order = self._topological_order()
        self._widths = self._validate()

    # ------------------------------------------------------------------ queries

    def node(self, node_id: int) -> LayerNode:
        try:
            return self._by_id[node_id]
        except KeyError:
            raise TopologyError(f"unknown node id {node_id}") from None

    def __contains__(self, node_id: int) -> bool:
        return node_id in self._by_id

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def ids(self) -> List[int]:
        return [node.id for node in self.nodes]

    @property
    def weighted_ids(self) -> List[int]:
        return [node.id for node in self.nodes if node.is_weighted]

    def predecessors(self, node_id: int) -> List[int]:
        return list(self._preds[node_id])

    def successors(self, node_id: int) -> List[int]:
        return list(self._succs[node_id])

    def topological_order(self) -> List[int]:
        return list(self._order)

    def output_width(self, node_id: int) -> Optional[int]:
        return self._widths[node_id]

    def weights(self) -> Dict[int, WeightTensor]:
        """Weighted node id -> weight tensor, in node order"""
        return {node.id: node.weight for node in self.nodes if node.is_weighted}

    def total_weight_elements(self) -> int:
        return sum(node.weight.rows * node.weight.cols for node in self.nodes if node.is_weighted)

    # ---------------------------------------------------------------- rebuilding

    def replace_nodes(self, updates: Mapping[int, LayerNode]) -> "WeightGraph":
        """Return a new graph with some nodes swapped for same-id replacements"""
        for node_id, node in updates.items():
            if node.id != node_id or node_id not in self._by_id:
                raise TopologyError(f"replacement for node {node_id} does not match an existing node")
        nodes = [updates.get(node.id, node) for node in self.nodes]
        return WeightGraph(nodes, self.edges, self.input_ids, self.output_ids)

    def structure_dict(self) -> Dict[str, Any]:
        """Architecture description with every parameter value left out"""
        nodes = []
        for node in self.nodes:
            entry: Dict[str, Any] = {"id": node.id, "kind": node.kind.value}
            if node.weight is not None:
                entry["rows"] = node.weight.rows
                entry["cols"] = node.weight.cols
                entry["has_bias"] = node.weight.bias is not None
            if node.affine is not None:
                entry["channels"] = node.affine.channels
            entry["meta"] = {key: node.meta[key] for key in sorted(node.meta)}
            nodes.append(entry)
        return {
            "nodes": nodes,
            "edges": [list(edge) for edge in self.edges],
            "inputs": list(self.input_ids),
            "outputs": list(self.output_ids),
        }

    def same_values(self, other: "WeightGraph") -> bool:
        """True when both graphs share structure and every parameter bit"""
        if self.structure_dict() != other.structure_dict():
            return False
        for mine, theirs in zip(self.nodes, other.nodes):
            if mine.weight is not None and not mine.weight.same_values(theirs.weight):
                return False
            if mine.affine is not None and not mine.affine.same_values(theirs.affine):
                return False
        return True

    # ---------------------------------------------------------------- validation

    def _topological_order(self) -> List[int]:
        indegree = {node_id: len(preds) for node_id, preds in self._preds.items()}
        position = {node.id: index for index, node in enumerate(self.nodes)}
        ready = deque(sorted((n for n, d in indegree.items() if d == 0), key=position.get))
        order: List[int] = []
        while ready:
            current = ready.popleft()
            order.append(current)
            for succ in self._succs[current]:
                indegree[succ] -= 1
                if indegree[succ] == 0:
                    ready.append(succ)
        if len(order) != len(self.nodes):
            stuck = sorted(n for n, d in indegree.items() if d > 0)
            raise TopologyError(f"graph contains a cycle through nodes {stuck}")
        return order

    def _validate(self) -> Dict[int, Optional[int]]:
        if not self.input_ids:
            raise TopologyError("graph declares no input nodes")
        if not self.output_ids:
            raise TopologyError("graph declares no output nodes")
        for node_id in self.input_ids + self.output_ids:
            if node_id not in self._by_id:
                raise TopologyError(f"input/output id {node_id} references an unknown node")

        reached = set(self.input_ids)
        frontier = deque(self.input_ids)
        while frontier:
            for succ in self._succs[frontier.popleft()]:
                if succ not in reached:
                    reached.add(succ)
                    frontier.append(succ)
        unreachable = [node.id for node in self.nodes if node.id not in reached]
        if unreachable:
            raise TopologyError(f"nodes {unreachable} are not reachable from any input")

        for node in self.nodes:
            if node.id not in self.input_ids and not self._preds[node.id]:
                raise TopologyError(f"node {node.id} has no producer and is not a model input")
            if node.kind not in (LayerKind.ADD,) and len(self._preds[node.id]) > 1:
                raise TopologyError(f"{node.kind.value} node {node.id} has {len(self._preds[node.id])} producers")

        return self._propagate_widths()

    def _propagate_widths(self) -> Dict[int, Optional[int]]:
        widths: Dict[int, Optional[int]] = {}
        for node_id in self._order:
            node = self._by_id[node_id]
            incoming = [widths[p] for p in self._preds[node_id]]
            known = {w for w in incoming if w is not None}
            declared = node.declared_in_width

            if declared is not None:
                for pred, width in zip(self._preds[node_id], incoming):
                    if width is not None and width != declared:
                        raise TopologyError(
                            f"width mismatch on edge ({pred}, {node_id}): producer emits {width}, "
                            f"consumer expects {declared}"
                        )
                in_width: Optional[int] = declared
            else:
                if len(known) > 1:
                    raise TopologyError(f"node {node_id} receives inputs of differing widths {sorted(known)}")
                in_width = known.pop() if known else node.meta.get("width")

            if node.kind == LayerKind.LINEAR:
                widths[node_id] = node.weight.rows
            elif node.kind == LayerKind.CONV2D:
                widths[node_id] = int(node.meta["out_channels"])
            elif node.kind == LayerKind.FLATTEN:
                widths[node_id] = None if in_width is None else in_width * node.spatial_area
            else:
                widths[node_id] = in_width
        return widths

    def __repr__(self) -> str:
        return (f"WeightGraph({len(self.nodes)} nodes, {len(self.edges)} edges, "
                f"{len(self.weighted_ids)} weighted)")
