import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from src.errors import ConfigError, ManifestParseError, ShapeError
from src.pruning.importance import TileShape, element_scores, tile_scores
from src.pruning.loss import pruning_loss
from src.pruning.mask import PruneMask, PrunePlan, load_mask, save_mask
from src.pruning.pruner import apply_mask, deletion_budget, tile_prune, unstructured_prune
from tests.helpers import parallel_graph

matrices = arrays(
    np.float32,
    st.tuples(st.integers(1, 10), st.integers(1, 10)),
    elements=st.floats(-10, 10, width=32),
)
tile_shapes = st.builds(TileShape, st.integers(1, 4), st.integers(1, 4))
sparsities = st.floats(0, 1)


class TestPrunePlan:
    @pytest.mark.parametrize("s", [-0.1, 1.5, float("nan")])
    def test_sparsity_range(self, s):
        with pytest.raises(ConfigError):
            PrunePlan(TileShape(2, 2), s)

    def test_unstructured_ignores_tile(self):
        assert PrunePlan(TileShape(4, 4), 0.3).unstructured().tile_shape == TileShape(1, 1)


def test_deletion_budget_floors_and_snaps():
    assert deletion_budget(0.5, 7) == 3
    assert deletion_budget(0.7, 10) == 7
    assert deletion_budget(0.3, 10) == 3
    assert deletion_budget(1.0, 16) == 16


class TestTilePrune:
    def test_zero_sparsity_keeps_everything(self, chain_graph):
        mask = tile_prune(chain_graph, PrunePlan(TileShape(2, 2), 0.0))
        assert mask.deleted_elements == 0
        assert mask.achieved_sparsity == 0.0

    def test_full_sparsity_deletes_everything(self, chain_graph):
        mask = tile_prune(chain_graph, PrunePlan(TileShape(2, 2), 1.0))
        assert mask.deleted_elements == mask.total_elements
        assert mask.achieved_sparsity == 1.0

    def test_global_threshold_spans_layers(self):
        graph = parallel_graph(np.ones((4, 4)), np.full((4, 4), 2.0))
        mask = tile_prune(graph, PrunePlan(TileShape(2, 2), 0.5))
        assert not mask.tile_keep[0].any()
        assert mask.tile_keep[1].all()

    def test_under_deletes_when_budget_is_not_attainable(self):
        graph = parallel_graph(np.arange(1, 17, dtype=np.float32).reshape(4, 4))
        mask = tile_prune(graph, PrunePlan(TileShape(2, 2), 0.4))
        assert mask.deleted_elements == 4
        assert not mask.tile_keep[0][0, 0]


class TestUnstructuredPrune:
    def test_deletes_smallest(self):
        mask = unstructured_prune(parallel_graph([[4, 3, 2, 1]]), PrunePlan(TileShape(8, 8), 0.5))
        assert mask.element_keep(0).tolist() == [[True, True, False, False]]

    def test_ties_follow_position(self):
        mask = unstructured_prune(parallel_graph([[1, 1, 1, 1]]), PrunePlan(TileShape(1, 1), 0.5))
        assert mask.element_keep(0).tolist() == [[False, False, True, True]]

    def test_optimal_among_equal_cardinality_masks(self):
        rng = np.random.default_rng(7)
        w = rng.normal(size=(3, 3)).astype(np.float32)
        scores = element_scores(w).ravel()
        for s in (0.2, 0.5, 0.8):
            mask = unstructured_prune(parallel_graph(w), PrunePlan(TileShape(1, 1), s))
            k = mask.deleted_elements
            best = min(math.fsum(scores[list(c)]) for c in itertools.combinations(range(9), k))
            assert pruning_loss({0: element_scores(w)}, mask) == pytest.approx(best, rel=1e-12, abs=1e-12)


class TestApplyMask:
    def test_all_keep_is_bit_identical(self, chain_graph):
        plan = PrunePlan(TileShape(2, 2), 0.0)
        assert apply_mask(chain_graph, tile_prune(chain_graph, plan)).same_values(chain_graph)

    def test_all_delete_zeroes_weights(self, chain_graph):
        pruned = apply_mask(chain_graph, tile_prune(chain_graph, PrunePlan(TileShape(2, 2), 1.0)))
        assert all(not w.data.any() for w in pruned.weights().values())

    def test_deleted_region_zero_and_kept_region_untouched(self):
        w = np.array([[1, 1, 9, 9], [1, 1, 9, 9]], dtype=np.float32)
        graph = parallel_graph(w)
        pruned = apply_mask(graph, tile_prune(graph, PrunePlan(TileShape(2, 2), 0.5)))
        data = pruned.node(0).weight.data
        assert data[:, :2].tolist() == [[0, 0], [0, 0]]
        assert data[:, 2:].tobytes() == w[:, 2:].tobytes()

    def test_shape_mismatch(self, chain_graph, residual_graph):
        mask = tile_prune(chain_graph, PrunePlan(TileShape(2, 2), 0.5))
        with pytest.raises(ShapeError):
            apply_mask(residual_graph, mask)


def test_mask_file_round_trip(chain_graph, tmp_path):
    mask = tile_prune(chain_graph, PrunePlan(TileShape(4, 4), 0.6))
    path = str(tmp_path / "mask.json")
    save_mask(mask, path)
    loaded = load_mask(path)
    assert loaded.plan == mask.plan
    for layer_id in mask.layer_ids:
        assert np.array_equal(loaded.tile_keep[layer_id], mask.tile_keep[layer_id])


@pytest.mark.parametrize("layers", [
    {"0": {"rows": 2, "cols": 2}},
    {"0": {"rows": "two", "cols": 2, "kept_tiles": []}},
    {"0": {"rows": 2, "cols": 2, "kept_tiles": ["a"]}},
    {"0": {"rows": 2, "cols": 2, "kept_tiles": None}},
    {"0": {"rows": -2, "cols": 2, "kept_tiles": []}},
    {"x": {"rows": 2, "cols": 2, "kept_tiles": []}},
    {"0": [2, 2]},
    [],
])
def test_malformed_mask_file_is_a_parse_error(tmp_path, layers):
    path = tmp_path / "mask.json"
    plan = PrunePlan(TileShape(1, 1), 0.5).to_dict()
    path.write_text(json.dumps({"plan": plan, "layers": layers}), encoding="utf-8")
    with pytest.raises(ManifestParseError):
        load_mask(str(path))


@pytest.mark.parametrize("plan", [{"tile_a": 0, "tile_b": 1, "sparsity": 0.5},
                                  {"tile_a": 1, "tile_b": 1, "sparsity": "half"},
                                  {"tile_a": 1, "tile_b": 1, "sparsity": 2.0},
                                  "1x1"])
def test_invalid_plan_in_mask_file_is_a_parse_error(plan):
    with pytest.raises(ManifestParseError):
        PruneMask.from_dict({"plan": plan, "layers": {}})


def test_mask_requires_every_layer():
    plan = PrunePlan(TileShape(1, 1), 0.5)
    with pytest.raises(ShapeError):
        PruneMask(plan, {}, {0: (2, 2)})


@settings(max_examples=100, deadline=None)
@given(w=matrices, v=matrices, tile=tile_shapes, s=sparsities)
def test_sparsity_bound(w, v, tile, s):
    mask = tile_prune(parallel_graph(w, v), PrunePlan(tile, s))
    total = mask.total_elements
    assert mask.achieved_sparsity <= s + 1e-9
    assert (s - mask.achieved_sparsity) * total < tile.area + 1e-9


@settings(max_examples=60, deadline=None)
@given(w=matrices, tile=tile_shapes, s1=sparsities, s2=sparsities)
def test_deleted_tiles_grow_with_sparsity(w, tile, s1, s2):
    low, high = sorted((s1, s2))
    graph = parallel_graph(w)
    kept_low = tile_prune(graph, PrunePlan(tile, low)).tile_keep[0]
    kept_high = tile_prune(graph, PrunePlan(tile, high)).tile_keep[0]
    assert not (~kept_low & kept_high).any()


@settings(max_examples=60, deadline=None)
@given(w=matrices, tile=tile_shapes, s=sparsities)
def test_deleted_tiles_never_outrank_kept_tiles(w, tile, s):
    mask = tile_prune(parallel_graph(w), PrunePlan(tile, s))
    means = tile_scores(element_scores(w), tile).means
    keep = mask.tile_keep[0]
    if keep.any() and (~keep).any():
        assert means[~keep].max() <= means[keep].min()


def test_pruning_is_deterministic(alexnet_graph):
    plan = PrunePlan(TileShape(4, 4), 0.55)
    first, second = tile_prune(alexnet_graph, plan), tile_prune(alexnet_graph, plan)
    assert first.to_dict() == second.to_dict()
