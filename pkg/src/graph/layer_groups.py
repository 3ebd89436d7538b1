# -*- coding: utf-8 -*-
"""
Layer Group Analysis Module

Finds the parents and children of every layer (nearest weighted layers,
looking through weightless nodes) and merges layers whose outputs meet in a
common consumer into groups that must share one channel permutation.
"""

import logging
from dataclasses import dataclass
from typing import Dict, FrozenSet, Hashable, Iterable, List, Optional, Set, Tuple

from src.graph.model_graph import INPUT, OUTPUT, LayerKind, WeightGraph

logger = logging.getLogger(__name__)


class UnionFind:
    """Disjoint sets with union by rank and path compression"""

    def __init__(self, items: Iterable[Hashable] = ()):
        self._leader: Dict[Hashable, Hashable] = {}
        self._rank: Dict[Hashable, int] = {}
        for item in items:
            self.add(item)

    def add(self, item: Hashable) -> None:
        if item not in self._leader:
            self._leader[item] = item
            self._rank[item] = 0

    def find(self, item: Hashable) -> Hashable:
        path = [item]
        leader = self._leader[item]
        while leader != self._leader[leader]:
            path.append(leader)
            leader = self._leader[leader]
        for visited in path:
            self._leader[visited] = leader
        return leader

    def union(self, a: Hashable, b: Hashable) -> bool:
        """Merge the sets of a and b; returns False when they were already joined"""
        root_a, root_b = self.find(a), self.find(b)
        if root_a == root_b:
            return False
        if self._rank[root_a] < self._rank[root_b]:
            root_a, root_b = root_b, root_a
        self._leader[root_b] = root_a
        if self._rank[root_a] == self._rank[root_b]:
            self._rank[root_a] += 1
        return True

    def union_all(self, items: Iterable[Hashable]) -> None:
        items = list(items)
        for other in items[1:]:
            self.union(items[0], other)

    def components(self) -> List[List[Hashable]]:
        grouped: Dict[Hashable, List[Hashable]] = {}
        for item in self._leader:
            grouped.setdefault(self.find(item), []).append(item)
        return list(grouped.values())


@dataclass(frozen=True)
class LayerGroup:
    """Weighted layers sharing one transformation, and the layers that must undo it"""

    members: Tuple[int, ...]
    children: Tuple[int, ...]
    forbidden: bool = False
    reason: str = ""

    @property
    def leader(self) -> int:
        return self.members[0]

    def __contains__(self, node_id: int) -> bool:
        return node_id in self.members


class GraphAnalyzer:
    """Memoized parent/child queries over one immutable graph"""

    def __init__(self, graph: WeightGraph):
        self.graph = graph
        self._parents: Dict[int, FrozenSet[int]] = {}
        self._children: Dict[int, FrozenSet[int]] = {}
        self._multipliers: Dict[Tuple[int, FrozenSet[int]], FrozenSet[int]] = {}

    def effective_parents(self, node_id: int) -> FrozenSet[int]:
        """Nearest weighted ancestors of a node; INPUT stands for the model input"""
        if node_id in self._parents:
            return self._parents[node_id]
        found: Set[int] = set()
        if node_id in self.graph.input_ids:
            found.add(INPUT)
        for pred in self.graph.predecessors(node_id):
            if self.graph.node(pred).is_weighted:
                found.add(pred)
            else:
                found |= self.effective_parents(pred)
        result = frozenset(found)
        self._parents[node_id] = result
        return result

    def effective_children(self, node_id: int) -> FrozenSet[int]:
        """Nearest weighted descendants of a node; OUTPUT stands for the model output"""
        if node_id in self._children:
            return self._children[node_id]
        found: Set[int] = set()
        if node_id in self.graph.output_ids:
            found.add(OUTPUT)
        for succ in self.graph.successors(node_id):
            if self.graph.node(succ).is_weighted:
                found.add(succ)
            else:
                found |= self.effective_children(succ)
        result = frozenset(found)
        self._children[node_id] = result
        return result

    def parent_sets(self) -> List[FrozenSet[int]]:
        """Effective-parent set of every node, in node order"""
        return [self.effective_parents(node_id) for node_id in self.graph.ids]

    def block_sizes(self, child_id: int, sources: Iterable[int]) -> Set[int]:
        """
        Column block sizes with which a child sees the output channels of the given sources

        A channel of a source maps to kernel_h * kernel_w consecutive lowered
        columns of a conv child, or to spatial_area consecutive features after
        each flatten crossed on the way.
        """
        sources = frozenset(sources)
        child = self.graph.node(child_id)
        return {child.kernel_area * m for m in self._input_multipliers(child_id, sources)}

    def _input_multipliers(self, node_id: int, sources: FrozenSet[int]) -> FrozenSet[int]:
        """Distinct flatten-area products on paths from the sources into a node's input"""
        key = (node_id, sources)
        if key in self._multipliers:
            return self._multipliers[key]
        found: Set[int] = set()
        for pred in self.graph.predecessors(node_id):
            if pred in sources:
                found.add(1)
                continue
            node = self.graph.node(pred)
            if node.is_weighted:
                continue
            scale = node.spatial_area if node.kind == LayerKind.FLATTEN else 1
            found.update(scale * m for m in self._input_multipliers(pred, sources))
        result = frozenset(found)
        self._multipliers[key] = result
        return result


def effective_parents(graph: WeightGraph, node_id: int) -> FrozenSet[int]:
    """
    Nearest weighted ancestors of a node, traversing weightless nodes

    Args:
        graph: Model graph
        node_id: Queried node

    Returns:
        Set of weighted node ids, containing INPUT when model input reaches the node directly
    """
    graph.node(node_id)
    return GraphAnalyzer(graph).effective_parents(node_id)


def effective_children(graph: WeightGraph, node_id: int) -> FrozenSet[int]:
    """Nearest weighted descendants of a node; contains OUTPUT when it feeds the model output"""
    graph.node(node_id)
    return GraphAnalyzer(graph).effective_children(node_id)


def merge_parent_sets(parent_sets: Iterable[Iterable[int]],
                      universe: Iterable[int] = ()) -> List[FrozenSet[int]]:
    """Merge intersecting sets to a fixed point; every id of the universe ends up in exactly one set"""
    sets = UnionFind(universe)
    for parents in parent_sets:
        parents = sorted(parents)
        for item in parents:
            sets.add(item)
        sets.union_all(parents)
    return sorted((frozenset(component) for component in sets.components()), key=min)


def _forbidden_reason(members: List[int], analyzer: GraphAnalyzer,
                      component_has_input: bool) -> Optional[str]:
    if component_has_input:
        return "shares a transformation with the model input"
    for member in members:
        if INPUT in analyzer.effective_parents(member):
            return f"member {member} reads the model input"
        if OUTPUT in analyzer.effective_children(member):
            return f"member {member} produces the model output"
    return None


def build_layer_groups(graph: WeightGraph,
                       analyzer: Optional[GraphAnalyzer] = None) -> List[LayerGroup]:
    """
    Partition the weighted layers into groups that must share one transformation

    Every node's effective-parent set must be transformed together, so all
    intersecting parent sets are merged with a union-find over weighted ids
    (plus the INPUT pseudo-parent).

    Args:
        graph: Model graph
        analyzer: Optional pre-built analyzer to reuse memoized queries

    Returns:
        Groups ordered by their smallest member id
    """
    analyzer = analyzer or GraphAnalyzer(graph)
    components = merge_parent_sets(analyzer.parent_sets(), graph.weighted_ids + [INPUT])

    groups = []
    for component in components:
        members = sorted(item for item in component if item != INPUT)
        if not members:
            continue
        children: Set[int] = set()
        for member in members:
            children |= analyzer.effective_children(member)
        children.discard(OUTPUT)
        reason = _forbidden_reason(members, analyzer, INPUT in component)
        groups.append(LayerGroup(
            members=tuple(members),
            children=tuple(sorted(children)),
            forbidden=reason is not None,
            reason=reason or "",
        ))

    groups.sort(key=lambda group: group.leader)
    free = sum(1 for group in groups if not group.forbidden)
    logger.info(f"Built {len(groups)} layer groups ({free} transformable) for {graph!r}")
    for group in groups:
        logger.debug(f"Group {list(group.members)} -> children {list(group.children)}"
                     + (f" forbidden: {group.reason}" if group.forbidden else ""))
    return groups


def group_of(groups: List[LayerGroup], node_id: int) -> Optional[LayerGroup]:
    """Return the group holding a weighted node"""
    for group in groups:
        if node_id in group.members:
            return group
    return None
