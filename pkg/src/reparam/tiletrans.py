# -*- coding: utf-8 -*-
"""
TileTrans Reparameterization Module

Reorders the output channels of every transformable layer group so that rows
of similar importance sit next to each other, and undoes the reordering in the
group's children by permuting their input columns. Because only permutations
are used, ReLU, pooling, flatten and per-channel affine layers commute with
the transformation and the model function is unchanged.

Row mode sorts the group's own rows; column mode sorts the children's column
blocks and lets the group's rows follow.
"""

import json
import logging
import os
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.errors import ConfigError, InvariantError, ManifestParseError, ShapeError, TopologyError
from src.graph.layer_groups import GraphAnalyzer, LayerGroup, build_layer_groups
from src.graph.model_graph import INPUT, AffineParams, LayerKind, LayerNode, WeightGraph
from src.pruning.importance import ImportanceCriterion, MatrixLike, element_scores
from src.reparam.permutation import Permutation

logger = logging.getLogger(__name__)


class TransformMode(str, Enum):
    ROW = "row"
    COLUMN = "column"

    @classmethod
    def parse(cls, value: Any) -> "TransformMode":
        try:
            return cls(value)
        except ValueError:
            raise ConfigError(f"unknown transform mode {value!r} (choose row or column)") from None


@dataclass(frozen=True)
class GroupTransform:
    """One permutation shared by all members of a layer group"""

    members: Tuple[int, ...]
    children: Tuple[int, ...]
    permutation: Permutation
    forbidden: bool = False
    reason: str = ""

    def to_dict(self) -> Dict[str, Any]:
        entry: Dict[str, Any] = {
            "members": list(self.members),
            "children": list(self.children),
            "forward": self.permutation.to_list(),
        }
        if self.forbidden:
            entry["forbidden"] = True
            entry["reason"] = self.reason
        return entry

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GroupTransform":
        try:
            forward = [int(i) for i in data["forward"]]
            members = tuple(int(i) for i in data["members"])
            children = tuple(int(i) for i in data["children"])
        except (KeyError, TypeError, ValueError) as e:
            raise ManifestParseError(f"malformed plan group {data!r} ({e})") from None
        if sorted(forward) != list(range(len(forward))):
            raise ManifestParseError(f"plan group {list(members)}: forward is not a permutation")
        return cls(
            members=members,
            children=children,
            permutation=Permutation(forward),
            forbidden=bool(data.get("forbidden", False)),
            reason=str(data.get("reason", "")),
        )


@dataclass
class TransformPlan:
    """Per-group permutations of one TileTrans pass"""

    mode: TransformMode
    groups: List[GroupTransform]

    @property
    def is_identity(self) -> bool:
        return all(group.permutation.is_identity for group in self.groups)

    @property
    def active_groups(self) -> List[GroupTransform]:
        return [group for group in self.groups if not group.permutation.is_identity]

    def member_permutations(self) -> Dict[int, Permutation]:
        """Weighted node id -> the permutation applied to its rows"""
        return {member: group.permutation for group in self.groups for member in group.members}

    def inverse(self) -> "TransformPlan":
        return TransformPlan(self.mode, [
            GroupTransform(g.members, g.children, g.permutation.inverse(), g.forbidden, g.reason)
            for g in self.groups
        ])

    def to_dict(self) -> Dict[str, Any]:
        return {"mode": self.mode.value, "groups": [group.to_dict() for group in self.groups]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TransformPlan":
        if not isinstance(data, dict) or "mode" not in data or "groups" not in data:
            raise ManifestParseError("plan needs 'mode' and 'groups'")
        try:
            mode = TransformMode(data["mode"])
        except ValueError:
            raise ManifestParseError(f"unknown plan mode {data['mode']!r}") from None
        return cls(mode, [GroupTransform.from_dict(group) for group in data["groups"]])

    @classmethod
    def identity(cls, graph: WeightGraph, mode: TransformMode = TransformMode.ROW) -> "TransformPlan":
        groups = build_layer_groups(graph)
        return cls(mode, [
            GroupTransform(g.members, g.children, Permutation.identity(graph.node(g.leader).weight.rows),
                           g.forbidden, g.reason)
            for g in groups
        ])


def save_plan(plan: TransformPlan, path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(plan.to_dict(), f, indent=2)
        f.write("\n")
    logger.info(f"Saved plan with {len(plan.active_groups)} active groups to {path}")


def load_plan(path: str) -> TransformPlan:
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ManifestParseError(f"{path}: cannot read plan ({e})") from e
    return TransformPlan.from_dict(data)


# ---------------------------------------------------------------------------
# Building permutations
# ---------------------------------------------------------------------------

def _group_rows(group: LayerGroup, graph: WeightGraph) -> int:
    counts = {member: graph.node(member).weight.rows for member in group.members}
    if len(set(counts.values())) != 1:
        raise InvariantError(f"group {list(group.members)} mixes row counts {counts}")
    return next(iter(counts.values()))


def _single_block(analyzer: GraphAnalyzer, node_id: int, members: Tuple[int, ...]) -> Optional[int]:
    sizes = analyzer.block_sizes(node_id, members)
    return sizes.pop() if len(sizes) == 1 else None


def row_sort_permutation(matrices: Sequence[MatrixLike],
                         criterion: ImportanceCriterion = ImportanceCriterion.L1) -> Permutation:
    """Order the rows of row-aligned matrices by descending mean importance of their concatenation"""
    concatenated = np.hstack([element_scores(m, criterion) for m in matrices])
    return Permutation.descending(concatenated.mean(axis=1))


def build_trans(group: LayerGroup, graph: WeightGraph,
                criterion: ImportanceCriterion = ImportanceCriterion.L1) -> Permutation:
    """
    Row-mode permutation for a layer group

    The members' weight matrices are concatenated side by side (their rows line
    up) and rows are ordered by descending mean importance, ties by index.

    Args:
        group: Layer group whose members share one row count
        graph: Model graph
        criterion: Importance criterion

    Returns:
        Permutation R with R applied to the concatenated matrix giving the sorted rows
    """
    _group_rows(group, graph)
    return row_sort_permutation([graph.node(m).weight for m in group.members], criterion)


def build_column_trans(group: LayerGroup, graph: WeightGraph,
                       criterion: ImportanceCriterion = ImportanceCriterion.L1,
                       analyzer: Optional[GraphAnalyzer] = None) -> Permutation:
    """Column-mode permutation: channels ordered by the mean importance of the children's column blocks"""
    analyzer = analyzer or GraphAnalyzer(graph)
    channels = _group_rows(group, graph)
    sums = np.zeros(channels)
    counts = np.zeros(channels)
    for child_id in group.children:
        block = _single_block(analyzer, child_id, group.members)
        child = graph.node(child_id).weight
        if block is None or child.cols != channels * block:
            raise ShapeError(f"child {child_id} cannot be split into {channels} column blocks")
        scores = element_scores(child, criterion).reshape(child.rows, channels, block)
        sums += scores.sum(axis=(0, 2))
        counts += child.rows * block
    if not counts.any():
        return Permutation.identity(channels)
    return Permutation.descending(sums / counts)


def _incompatibility(group: LayerGroup, graph: WeightGraph, analyzer: GraphAnalyzer) -> Optional[str]:
    """Describe why the group's children cannot take the inverse permutation, if they cannot"""
    channels = _group_rows(group, graph)
    for child_id in group.children:
        block = _single_block(analyzer, child_id, group.members)
        if block is None or graph.node(child_id).weight.cols != channels * block:
            sizes = sorted(analyzer.block_sizes(child_id, group.members))
            return f"child {child_id} has incompatible column blocks {sizes}"
    return None


def plan_transform(graph: WeightGraph,
                   criterion: ImportanceCriterion = ImportanceCriterion.L1,
                   mode: TransformMode = TransformMode.ROW) -> TransformPlan:
    """Build one permutation per transformable group without touching the weights"""
    mode = TransformMode.parse(mode)
    analyzer = GraphAnalyzer(graph)
    transforms = []
    for group in build_layer_groups(graph, analyzer):
        channels = _group_rows(group, graph)
        reason = group.reason if group.forbidden else None

        if reason is None:
            problem = _incompatibility(group, graph, analyzer)
            if problem is not None:
                if not set(group.children) & set(group.members):
                    raise ShapeError(f"group {list(group.members)}: {problem}")
                reason = f"self-referential group: {problem}"
                logger.warning(f"Skipping group {list(group.members)}: {reason}")

        if reason is not None:
            logger.debug(f"Group {list(group.members)} keeps identity: {reason}")
            transforms.append(GroupTransform(group.members, group.children,
                                             Permutation.identity(channels), True, reason))
            continue

        if mode == TransformMode.ROW:
            permutation = build_trans(group, graph, criterion)
        else:
            permutation = build_column_trans(group, graph, criterion, analyzer)
        transforms.append(GroupTransform(group.members, group.children, permutation))

    plan = TransformPlan(mode, transforms)
    logger.info(f"Planned {mode.value}-mode transform: {len(plan.active_groups)} of "
                f"{len(transforms)} groups permuted")
    return plan


# ---------------------------------------------------------------------------
# Applying permutations
# ---------------------------------------------------------------------------

def _check_plan(plan: TransformPlan, graph: WeightGraph, analyzer: GraphAnalyzer) -> None:
    expected = {g.members: g for g in build_layer_groups(graph, analyzer)}
    for transform in plan.groups:
        group = expected.get(tuple(sorted(transform.members)))
        if group is None:
            if transform.permutation.is_identity:
                continue
            raise TopologyError(f"plan group {list(transform.members)} is not a layer group of this graph")
        if group.forbidden and not transform.permutation.is_identity:
            raise TopologyError(f"plan permutes forbidden group {list(group.members)} ({group.reason})")
        if tuple(sorted(transform.children)) != group.children:
            raise TopologyError(f"plan group {list(transform.members)} lists children "
                                f"{list(transform.children)}, graph has {list(group.children)}")
        if transform.permutation.size != _group_rows(group, graph):
            raise ShapeError(f"plan group {list(transform.members)}: permutation of size "
                             f"{transform.permutation.size} for {_group_rows(group, graph)} rows")


def _affine_followers(graph: WeightGraph, analyzer: GraphAnalyzer,
                      members: Tuple[int, ...]) -> List[LayerNode]:
    member_set = set(members)
    followers = []
    for node in graph.nodes:
        if node.kind != LayerKind.AFFINE:
            continue
        parents = analyzer.effective_parents(node.id)
        if parents and INPUT not in parents and parents <= member_set:
            followers.append(node)
    return followers


def apply_transform(graph: WeightGraph, plan: TransformPlan) -> WeightGraph:
    """
    Apply a transform plan and return the reparameterized graph

    Members get their rows (and biases) permuted, per-channel affine layers fed
    by the group follow along, and children get their input columns permuted
    block-wise (kernel_h x kernel_w for conv children, spatial_area after a
    flatten). Topology and shapes are unchanged.

    Args:
        graph: Model graph
        plan: Plan built for this graph (or its inverse)

    Returns:
        New WeightGraph
    """
    analyzer = GraphAnalyzer(graph)
    _check_plan(plan, graph, analyzer)

    data: Dict[int, np.ndarray] = {}
    bias: Dict[int, Optional[np.ndarray]] = {}
    affine: Dict[int, Tuple[np.ndarray, np.ndarray]] = {}

    def weight_of(node_id: int) -> np.ndarray:
        if node_id not in data:
            weight = graph.node(node_id).weight
            data[node_id] = weight.data
            bias[node_id] = weight.bias
        return data[node_id]

    for transform in plan.active_groups:
        permutation = transform.permutation
        for member in transform.members:
            data[member] = permutation.permute_rows(weight_of(member))
            if bias[member] is not None:
                bias[member] = permutation.permute_vector(bias[member])

        for node in _affine_followers(graph, analyzer, transform.members):
            block = _single_block(analyzer, node.id, transform.members)
            if block is None:
                raise ShapeError(f"affine node {node.id} sees group {list(transform.members)} "
                                 f"through differing block sizes")
            scale, shift = affine.get(node.id, (node.affine.scale, node.affine.shift))
            affine[node.id] = (permutation.permute_vector(scale, block),
                               permutation.permute_vector(shift, block))

        for child_id in transform.children:
            block = _single_block(analyzer, child_id, transform.members)
            if block is None:
                raise ShapeError(f"child {child_id} sees group {list(transform.members)} "
                                 f"through differing block sizes")
            data[child_id] = permutation.permute_cols(weight_of(child_id), block)

        logger.debug(f"Permuted group {list(transform.members)} and children {list(transform.children)}")

    updates = {}
    for node_id, values in data.items():
        node = graph.node(node_id)
        updates[node_id] = node.replace(weight=node.weight.replace(data=values, bias=bias[node_id]))
    for node_id, (scale, shift) in affine.items():
        node = graph.node(node_id)
        updates[node_id] = node.replace(affine=AffineParams(scale, shift))
    return graph.replace_nodes(updates)


def tiletrans(graph: WeightGraph,
              criterion: ImportanceCriterion = ImportanceCriterion.L1,
              mode: TransformMode = TransformMode.ROW) -> Tuple[WeightGraph, TransformPlan]:
    """
    Reparameterize a model so that tile pruning loses less importance

    Args:
        graph: Model graph
        criterion: Importance criterion used to rank rows (or column blocks)
        mode: Row mode (parents to children) or column mode (children to parents)

    Returns:
        Tuple of the transformed graph and the plan that produced it
    """
    plan = plan_transform(graph, criterion, mode)
    transformed = apply_transform(graph, plan)
    logger.info(f"TileTrans ({TransformMode.parse(mode).value}) applied to {graph!r}")
    return transformed, plan
