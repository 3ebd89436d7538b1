import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from simulation.data_generator import ModelGenerator
from src.graph.layer_groups import (
    GraphAnalyzer,
    UnionFind,
    build_layer_groups,
    effective_children,
    effective_parents,
    group_of,
    merge_parent_sets,
)
from src.graph.model_graph import INPUT, OUTPUT, LayerKind, LayerNode, WeightGraph, WeightTensor
from src.reparam.tiletrans import tiletrans
from src.verification.oracle import check_function_preservation


def _members(groups):
    return [group.members for group in groups]


class TestUnionFind:
    def test_union_and_components(self):
        sets = UnionFind(range(5))
        assert sets.union(0, 1)
        assert sets.union(3, 4)
        assert not sets.union(1, 0)
        components = sorted(sorted(c) for c in sets.components())
        assert components == [[0, 1], [2], [3, 4]]

    def test_merge_parent_sets_reaches_fixed_point(self):
        merged = merge_parent_sets([{1, 2}, {3, 4}, {2, 3}, {5}])
        assert merged == [frozenset({1, 2, 3, 4}), frozenset({5})]

    def test_universe_adds_singletons(self):
        assert merge_parent_sets([{1}], universe=[1, 7]) == [frozenset({1}), frozenset({7})]


class TestParentsAndChildren:
    def test_chain(self, chain_graph):
        assert effective_parents(chain_graph, 0) == {INPUT}
        assert effective_parents(chain_graph, 2) == {0}
        assert effective_children(chain_graph, 2) == {4}
        assert effective_children(chain_graph, 4) == {OUTPUT}

    def test_residual_add_joins_two_parents(self, residual_graph):
        assert effective_parents(residual_graph, 7) == {2, 6}
        assert effective_parents(residual_graph, 8) == {2, 6}
        assert effective_children(residual_graph, 2) == {4, 8}


class TestBuildLayerGroups:
    def test_chain_of_three_forbids_first_and_last(self, chain_graph):
        groups = build_layer_groups(chain_graph)
        assert _members(groups) == [(0,), (2,), (4,)]
        assert [g.forbidden for g in groups] == [True, False, True]
        assert groups[1].children == (4,)

    def test_single_layer_model_is_forbidden(self):
        graph = WeightGraph([LayerNode(0, LayerKind.LINEAR, weight=WeightTensor(np.ones((2, 2))))], [], [0], [0])
        groups = build_layer_groups(graph)
        assert len(groups) == 1 and groups[0].forbidden

    def test_residual_groups_share_add_inputs(self, residual_graph):
        groups = build_layer_groups(residual_graph)
        assert _members(groups) == [(0,), (2, 6), (4,), (8,)]
        shared = group_of(groups, 6)
        assert shared.members == (2, 6)
        assert shared.children == (4, 8)
        assert not shared.forbidden
        assert groups[0].forbidden and groups[3].forbidden

    def test_resnet_stream_group_and_block_sizes(self, resnet_graph):
        groups = build_layer_groups(resnet_graph)
        stream = group_of(groups, 2)
        assert stream.members == (2, 6, 12)
        assert stream.children == (4, 10, 18)
        analyzer = GraphAnalyzer(resnet_graph)
        assert analyzer.block_sizes(4, stream.members) == {9}
        assert analyzer.block_sizes(18, stream.members) == {16}
        assert not stream.forbidden

    def test_alexnet_has_no_merged_groups(self, alexnet_graph):
        groups = build_layer_groups(alexnet_graph)
        assert all(len(g.members) == 1 for g in groups)
        assert len(groups) == 8
        assert sum(g.forbidden for g in groups) == 2


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**32 - 1))
def test_random_dags_satisfy_group_sharing(seed):
    graph = ModelGenerator(seed=seed).random_residual_dag(max_nodes=20)
    analyzer = GraphAnalyzer(graph)
    groups = build_layer_groups(graph, analyzer)

    seen = [m for g in groups for m in g.members]
    assert sorted(seen) == sorted(graph.weighted_ids)

    violations = 0
    for node_id in graph.ids:
        parents = analyzer.effective_parents(node_id) - {INPUT}
        holders = {group_of(groups, p).members for p in parents}
        if len(holders) > 1:
            violations += 1
        if INPUT in analyzer.effective_parents(node_id) and parents:
            assert group_of(groups, next(iter(parents))).forbidden
    assert violations == 0


def _diamond_ladder(blocks, width=6, seed=0):
    """linear -> relu -> linear -> `blocks` x add(relu(x), relu(x)) -> linear -> linear"""
    rng = np.random.default_rng(seed)

    def linear(node_id, rows, cols):
        return LayerNode(node_id, LayerKind.LINEAR,
                         weight=WeightTensor(rng.standard_normal((rows, cols)).astype(np.float32)))

    nodes = [linear(0, width, width), LayerNode(1, LayerKind.ELEMENTWISE), linear(2, width, width)]
    edges = [(0, 1), (1, 2)]
    previous = 2
    for _ in range(blocks):
        left, right, join = len(nodes), len(nodes) + 1, len(nodes) + 2
        nodes += [LayerNode(left, LayerKind.ELEMENTWISE), LayerNode(right, LayerKind.ELEMENTWISE),
                  LayerNode(join, LayerKind.ADD)]
        edges += [(previous, left), (previous, right), (left, join), (right, join)]
        previous = join
    consumer = len(nodes)
    nodes += [linear(consumer, width, width), linear(consumer + 1, 3, width)]
    edges += [(previous, consumer), (consumer, consumer + 1)]
    return WeightGraph(nodes, edges, [0], [consumer + 1]), consumer


def test_block_sizes_through_many_stacked_residual_joins():
    graph, consumer = _diamond_ladder(blocks=30)
    analyzer = GraphAnalyzer(graph)
    assert analyzer.effective_parents(consumer) == {2}
    assert analyzer.block_sizes(consumer, [2]) == {1}

    moved, plan = tiletrans(graph)
    assert any(2 in transform.members for transform in plan.groups)
    assert check_function_preservation(graph, moved, samples=8).passed
