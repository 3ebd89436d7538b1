import numpy as np
import pandas as pd
import pytest

from simulation.data_generator import ModelGenerator
from src.errors import ConfigError, DataError, InvariantError, ManifestParseError
from src.graph.serialization import blob_path_for, load_graph, save_graph
from src.pipeline.config import RunConfig, parse_shape, parse_sparsities, parse_tiles, thread_count
from src.pipeline.runner import create_pipeline_runner, read_report
from src.pruning.importance import TileShape
from src.pruning.loss import CSV_COLUMNS, loss_difference
from src.pruning.mask import PrunePlan, load_mask
from src.pruning.pruner import tile_prune
from src.reparam.tiletrans import tiletrans


def _run(**config):
    return create_pipeline_runner(RunConfig.from_dict(config)).run()


@pytest.fixture
def model_path(tmp_path, resnet_graph):
    path = str(tmp_path / "resnet.json")
    save_graph(resnet_graph, path)
    return path


@pytest.fixture
def synthetic_path(tmp_path, synthetic_graph):
    path = str(tmp_path / "synthetic.json")
    save_graph(synthetic_graph, path)
    return path


class TestParsing:
    def test_sparsity_range_is_inclusive_and_exact(self):
        values = parse_sparsities("0:1:0.1")
        assert len(values) == 11
        assert values[0] == 0.0 and values[3] == 0.3 and values[-1] == 1.0

    def test_sparsity_list_is_sorted_and_unique(self):
        assert parse_sparsities("0.5, 0.1,0.5") == [0.1, 0.5]

    @pytest.mark.parametrize("text", ["1.5", "-0.1", "0:1:0", "0:1", "abc", ""])
    def test_bad_sparsities(self, text):
        with pytest.raises(ConfigError):
            parse_sparsities(text)

    def test_tiles(self):
        assert parse_tiles("accelerator") == [TileShape(256, 1), TileShape(16, 16), TileShape(32, 32)]
        assert parse_tiles("2x2,4x4") == [TileShape(2, 2), TileShape(4, 4)]

    def test_input_shape(self):
        assert parse_shape("3,8,8") == (3, 8, 8)
        assert parse_shape(None) is None
        with pytest.raises(ConfigError):
            parse_shape("3,x")

    def test_thread_count(self):
        assert thread_count({}) == 1
        assert thread_count({"TILEWISE_THREADS": "4"}) == 4
        for raw in ("0", "many"):
            with pytest.raises(ConfigError):
                thread_count({"TILEWISE_THREADS": raw})


class TestRunConfig:
    @pytest.mark.parametrize("config", [
        {"command": "prune", "model": "m.json", "sparsity": "0.1,0.2"},
        {"command": "prune", "model": "m.json", "tiles": "2x2,4x4"},
        {"command": "sweep", "model": "m.json"},
        {"command": "verify", "model": "m.json"},
        {"command": "transform", "model": "m.json", "transform": "row"},
        {"command": "prune", "model": "m.json", "transform": "diagonal"},
        {"command": "prune", "model": "m.json", "criterion": "hessian"},
        {"command": "prune", "model": ""},
        {"command": "prune", "model": "m.json", "colour": "blue"},
    ])
    def test_invalid(self, config):
        with pytest.raises(ConfigError):
            RunConfig.from_dict(config)

    def test_dict_round_trip(self):
        config = RunConfig.from_dict({"command": "sweep", "model": "m.json", "report": "r.csv",
                                      "tiles": "accelerator", "sparsities": "0.2,0.6", "input_shape": "3,8,8"})
        assert RunConfig.from_dict(config.to_dict()) == config


class TestTransformCommand:
    def test_none_copies_files_unchanged(self, model_path, tmp_path):
        out = str(tmp_path / "copy.json")
        _run(command="transform", model=model_path, model_out=out)
        for src, dst in ((model_path, out), (blob_path_for(model_path), blob_path_for(out))):
            with open(src, "rb") as a, open(dst, "rb") as b:
                assert a.read() == b.read()

    def test_row_transform_preserves_function(self, model_path, tmp_path):
        out = str(tmp_path / "moved.json")
        result = _run(command="transform", model=model_path, transform="row", model_out=out,
                      plan_out=str(tmp_path / "plan.json"))
        assert result["groups_permuted"] >= 1
        verdict = _run(command="verify", model=model_path, candidate=out)
        assert verdict["passed"]

    def test_plan_replay_gives_identical_files(self, model_path, tmp_path):
        first, second = str(tmp_path / "a.json"), str(tmp_path / "b.json")
        plan = str(tmp_path / "plan.json")
        _run(command="transform", model=model_path, transform="row", model_out=first, plan_out=plan)
        _run(command="transform", model=model_path, plan_in=plan, model_out=second)
        with open(blob_path_for(first), "rb") as a, open(blob_path_for(second), "rb") as b:
            assert a.read() == b.read()


class TestPruneCommand:
    def test_writes_mask_and_zeroed_model(self, model_path, resnet_graph, tmp_path):
        mask_out, model_out = str(tmp_path / "mask.json"), str(tmp_path / "pruned.json")
        result = _run(command="prune", model=model_path, tiles="2x2", sparsity=0.5,
                      mask_out=mask_out, model_out=model_out)
        assert result["loss"] == loss_difference(resnet_graph, TileShape(2, 2), 0.5).loss
        mask = load_mask(mask_out)
        pruned = load_graph(model_out)
        assert mask.deleted_elements == int(sum((w.data == 0).sum() for w in pruned.weights().values()))

    def test_transform_then_prune_matches_library_calls(self, model_path, resnet_graph, tmp_path):
        result = _run(command="prune", model=model_path, tiles="4x4", sparsity=0.6, transform="row",
                      report=str(tmp_path / "one.csv"))
        moved, _ = tiletrans(resnet_graph)
        expected = tile_prune(moved, PrunePlan(TileShape(4, 4), 0.6))
        assert result["achieved_sparsity"] == expected.achieved_sparsity
        assert result["loss"] == loss_difference(moved, TileShape(4, 4), 0.6).loss
        assert read_report(str(tmp_path / "one.csv"))[0].transformed is True


class TestSweepCommand:
    def _sweep(self, path, report, **extra):
        return _run(command="sweep", model=path, tiles="1x1,2x2,4x4", sparsities="0,0.3,0.6,1",
                    transform="row", report=report, **extra)

    def test_report_layout(self, model_path, tmp_path):
        report = str(tmp_path / "sweep.csv")
        result = self._sweep(model_path, report)
        frame = pd.read_csv(report)
        assert list(frame.columns) == CSV_COLUMNS
        assert result["rows"] == len(frame) == 3 * 4 * 2
        assert frame["transformed"].tolist()[:2] == [False, True]

    def test_extremes_and_unstructured_tiles_have_zero_difference(self, model_path, tmp_path):
        frame = self._sweep(model_path, str(tmp_path / "sweep.csv"))["frame"]
        extremes = frame[frame["sparsity"].isin([0.0, 1.0])]
        assert (extremes["difference"] == 0.0).all()
        assert (frame[frame["tile_a"] == 1]["difference"] == 0.0).all()
        assert (frame["difference"] >= 0.0).all()

    def test_fixed_seed_sweeps_are_byte_identical(self, model_path, tmp_path):
        first, second = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
        self._sweep(model_path, first)
        self._sweep(model_path, second, threads=3)
        with open(first, "rb") as a, open(second, "rb") as b:
            assert a.read() == b.read()

    def test_per_layer_rows(self, model_path, resnet_graph, tmp_path):
        frame = _run(command="sweep", model=model_path, tiles="2x2", sparsities="0.5",
                     report=str(tmp_path / "sweep.csv"), per_layer=True)["frame"]
        layer_sets = frame["layer_set"].astype(str).tolist()
        assert layer_sets == ["all"] + [str(i) for i in resnet_graph.weighted_ids]
        assert frame["loss"].iloc[1:].sum() == pytest.approx(frame["loss"].iloc[0], rel=1e-12)

    def test_summary_gap_vanishes_at_extremes(self, synthetic_path, tmp_path):
        summary_path = str(tmp_path / "summary.csv")
        _run(command="sweep", model=synthetic_path, tiles="2x2", sparsities="0,0.6,1", transform="row",
             report=str(tmp_path / "sweep.csv"), summary=summary_path)
        summary = pd.read_csv(summary_path).set_index("sparsity")
        assert summary.loc[0.0, "gap"] == 0.0 and summary.loc[1.0, "gap"] == 0.0
        assert summary.loc[0.6, "gap"] >= 0.0
        assert 0.0 <= summary.loc[0.6, "normalized_transformed_loss"] <= summary.loc[0.6, "normalized_loss"]


class TestUnwritableOutputs:
    @pytest.fixture
    def blocker(self, tmp_path):
        path = tmp_path / "occupied"
        path.write_text("not a directory", encoding="utf-8")
        return path

    def test_report_under_a_file_fails_in_report_stage(self, model_path, blocker):
        with pytest.raises(DataError) as info:
            _run(command="sweep", model=model_path, tiles="2x2", sparsities="0.5",
                 report=str(blocker / "sweep.csv"))
        assert info.value.stage == "report"
        assert isinstance(info.value.__cause__, OSError)

    def test_model_out_under_a_file_fails_in_save_stage(self, model_path, blocker):
        with pytest.raises(DataError) as info:
            _run(command="transform", model=model_path, transform="row", model_out=str(blocker / "m.json"))
        assert info.value.stage == "save"

    def test_copy_under_a_file_fails_in_save_stage(self, model_path, blocker):
        with pytest.raises(DataError) as info:
            _run(command="transform", model=model_path, model_out=str(blocker / "copy.json"))
        assert info.value.stage == "save"

    def test_mask_out_under_a_file_fails_in_save_stage(self, model_path, blocker):
        with pytest.raises(DataError) as info:
            _run(command="prune", model=model_path, tiles="2x2", sparsity=0.5,
                 mask_out=str(blocker / "mask.json"))
        assert info.value.stage == "save"


class TestVerifyCommand:
    def test_broken_candidate_fails_in_verify_stage(self, model_path, resnet_graph, tmp_path):
        weight = resnet_graph.node(18).weight
        broken = resnet_graph.replace_nodes(
            {18: resnet_graph.node(18).replace(weight=weight.replace(data=weight.data[:, ::-1]))})
        candidate = str(tmp_path / "broken.json")
        save_graph(broken, candidate)
        with pytest.raises(InvariantError) as info:
            _run(command="verify", model=model_path, candidate=candidate)
        assert info.value.stage == "verify"

    def test_missing_model_fails_in_load_stage(self, tmp_path):
        with pytest.raises(ManifestParseError) as info:
            _run(command="verify", model=str(tmp_path / "absent.json"), candidate=str(tmp_path / "b.json"))
        assert info.value.stage == "load"


class TestSyntheticModelCurves:
    def _gap(self, plain, moved, tile, s):
        return loss_difference(plain, tile, s).loss - loss_difference(moved, tile, s).loss

    def test_gap_peaks_at_moderate_sparsity(self):
        plain = ModelGenerator(seed=0).synthetic_model()
        moved, _ = tiletrans(plain)
        tile = TileShape(4, 4)
        peak = self._gap(plain, moved, tile, 0.6)
        assert peak > self._gap(plain, moved, tile, 0.05)
        assert peak > self._gap(plain, moved, tile, 0.95)
        assert self._gap(plain, moved, tile, 0.0) == 0.0
        assert self._gap(plain, moved, tile, 1.0) == 0.0

    def test_larger_tiles_gain_more(self):
        wins = 0
        for seed in range(10):
            plain = ModelGenerator(seed=seed).synthetic_model()
            moved, _ = tiletrans(plain)
            reductions = []
            for tile in (TileShape(2, 2), TileShape(4, 4)):
                before = loss_difference(plain, tile, 0.6).loss
                reductions.append((before - loss_difference(moved, tile, 0.6).loss) / before)
            wins += reductions[1] >= reductions[0]
        assert wins >= 7


def test_threads_from_environment(model_path, tmp_path, monkeypatch):
    monkeypatch.setenv("TILEWISE_THREADS", "2")
    args = type("Args", (), {"command": "sweep", "model": model_path, "report": str(tmp_path / "r.csv")})()
    config = RunConfig.from_args(args)
    assert config.threads == 2
    assert config.sparsities == [0.5]
    assert np.isclose(config.rtol, 1e-5)
