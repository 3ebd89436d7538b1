# -*- coding: utf-8 -*-
"""
Pipeline Runner Module

Drives the command-line workflows: transform a model, prune it at one
sparsity, sweep tile shapes and sparsities into a CSV loss report, and verify
that a transformed model computes the same function as its original.

Each workflow runs in named stages (load, transform, prune, report, verify);
any TilewiseError escaping a stage is tagged with the stage name so the CLI
can report where the run failed. File system errors inside a stage surface
as DataError.
"""

import logging
import os
import shutil
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import replace
from typing import Any, Dict, Iterator, List, Optional, Tuple

import numpy as np
import pandas as pd

from src.errors import ConfigError, DataError, InvariantError, TilewiseError
from src.graph.model_graph import WeightGraph
from src.graph.serialization import blob_path_for, load_graph, save_graph
from src.pipeline.config import RunConfig, describe
from src.pruning.importance import ScoreSet, TileShape, score_set
from src.pruning.loss import CSV_COLUMNS, LossReport, loss_by_layer, report_for_mask, unstructured_loss
from src.pruning.mask import PrunePlan, save_mask
from src.pruning.pruner import apply_mask, prune_scores, tile_prune
from src.reparam.tiletrans import TransformMode, TransformPlan, apply_transform, load_plan, save_plan, tiletrans
from src.verification.oracle import PreservationResult, check_function_preservation

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = [
    "tile_a",
    "tile_b",
    "sparsity",
    "total_score",
    "baseline_loss",
    "loss",
    "transformed_loss",
    "gap",
    "relative_reduction",
    "normalized_loss",
    "normalized_transformed_loss",
]


def model_name(path: str) -> str:
    return os.path.splitext(os.path.basename(path))[0]


def write_report(rows: List[Dict[str, Any]], path: str) -> pd.DataFrame:
    """Write loss rows as CSV with the fixed column order"""
    frame = pd.DataFrame(rows, columns=CSV_COLUMNS)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    frame.to_csv(path, index=False)
    logger.info(f"Wrote {len(frame)} report rows to {path}")
    return frame


def read_report(path: str) -> List[LossReport]:
    frame = pd.read_csv(path, dtype={"model": str, "layer_set": str})
    return [LossReport.from_csv_row(row) for row in frame.to_dict(orient="records")]


def summarize_sweep(frame: pd.DataFrame) -> pd.DataFrame:
    """
    Per tile shape and sparsity: plain and transformed loss, their gap, the
    relative reduction, and both losses as a fraction of the total score

    Args:
        frame: Sweep report rows (layer_set "all" rows are used)

    Returns:
        DataFrame with SUMMARY_COLUMNS
    """
    rows = frame[frame["layer_set"].astype(str) == "all"]
    transformed = rows["transformed"].astype(str).str.lower() == "true"
    keys = ["tile_a", "tile_b", "sparsity"]
    plain = rows[~transformed].set_index(keys)
    moved = rows[transformed].set_index(keys)

    summary = pd.DataFrame(index=plain.index)
    summary["total_score"] = plain["total_score"] if "total_score" in plain else np.nan
    summary["baseline_loss"] = plain["baseline_loss"]
    summary["loss"] = plain["loss"]
    summary["transformed_loss"] = moved["loss"].reindex(plain.index) if len(moved) else np.nan
    summary["gap"] = summary["loss"] - summary["transformed_loss"]
    with np.errstate(divide="ignore", invalid="ignore"):
        summary["relative_reduction"] = np.where(summary["loss"] > 0, summary["gap"] / summary["loss"], 0.0)
        summary["normalized_loss"] = summary["loss"] / summary["total_score"]
        summary["normalized_transformed_loss"] = summary["transformed_loss"] / summary["total_score"]
    return summary.reset_index()[SUMMARY_COLUMNS]


class PipelineRunner:
    """Runs one CLI workflow from a RunConfig"""

    def __init__(self, config: RunConfig):
        self.config = config
        self.current_stage: Optional[str] = None
        logger.info(f"Pipeline configured: {describe(config)}")

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        self.current_stage = name
        logger.info(f"Stage '{name}' started")
        try:
            yield
        except TilewiseError as e:
            if e.stage is None:
                e.stage = name
            logger.error(f"Stage '{name}' failed: {e.message}")
            raise
        except OSError as e:
            detail = f"{e.filename}: {e.strerror}" if e.filename else str(e)
            logger.error(f"Stage '{name}' failed: {detail}")
            raise DataError(f"file access failed ({detail})", stage=name) from e
        logger.info(f"Stage '{name}' finished")

    def run(self) -> Dict[str, Any]:
        handlers = {
            "transform": self.run_transform,
            "prune": self.run_prune,
            "sweep": self.run_sweep,
            "verify": self.run_verify,
        }
        if self.config.command not in handlers:
            raise ConfigError(f"unknown command {self.config.command!r}")
        return handlers[self.config.command]()

    # ----------------------------------------------------------------- helpers

    def _load(self, path: str) -> WeightGraph:
        with self.stage("load"):
            return load_graph(path)

    def _transform(self, graph: WeightGraph) -> Tuple[WeightGraph, Optional[TransformPlan]]:
        cfg = self.config
        with self.stage("transform"):
            if cfg.plan_in:
                plan = load_plan(cfg.plan_in)
                return apply_transform(graph, plan), plan
            if cfg.transform == "none":
                return graph, None
            return tiletrans(graph, cfg.criterion, TransformMode(cfg.transform))

    # ---------------------------------------------------------------- commands

    def run_transform(self) -> Dict[str, Any]:
        """
        Load, reparameterize and save a model

        With transform mode "none" and no plan to replay, the model files are
        validated and copied unchanged.

        Returns:
            Dict with the output paths and the number of permuted groups
        """
        cfg = self.config
        graph = self._load(cfg.model)

        if cfg.transform == "none" and not cfg.plan_in:
            with self.stage("save"):
                if cfg.model_out:
                    os.makedirs(os.path.dirname(os.path.abspath(cfg.model_out)), exist_ok=True)
                    shutil.copyfile(cfg.model, cfg.model_out)
                    shutil.copyfile(blob_path_for(cfg.model), blob_path_for(cfg.model_out))
                if cfg.plan_out:
                    save_plan(TransformPlan.identity(graph), cfg.plan_out)
            return {"model_out": cfg.model_out, "plan_out": cfg.plan_out, "groups_permuted": 0}

        if not cfg.model_out:
            raise ConfigError("transform needs --model-out", stage="transform")
        transformed, plan = self._transform(graph)
        with self.stage("save"):
            save_graph(transformed, cfg.model_out)
            if cfg.plan_out:
                save_plan(plan, cfg.plan_out)
        return {
            "model_out": cfg.model_out,
            "plan_out": cfg.plan_out,
            "groups_permuted": len(plan.active_groups),
        }

    def run_prune(self) -> Dict[str, Any]:
        """Prune at one sparsity; writes the mask, the zeroed model and an optional one-row report"""
        cfg = self.config
        graph, _ = self._transform(self._load(cfg.model))

        with self.stage("prune"):
            plan = PrunePlan(cfg.tile_shape, cfg.sparsity, cfg.criterion)
            mask = tile_prune(graph, plan)
            report = report_for_mask(score_set(graph, cfg.criterion), mask)
            report.model = model_name(cfg.model)
            report.transformed = cfg.transform != "none" or bool(cfg.plan_in)

        with self.stage("save"):
            if cfg.mask_out:
                save_mask(mask, cfg.mask_out)
            if cfg.model_out:
                save_graph(apply_mask(graph, mask), cfg.model_out)
        if cfg.report:
            with self.stage("report"):
                write_report([report.to_csv_row()], cfg.report)

        logger.info(f"Pruned {mask.deleted_elements}/{mask.total_elements} weights, loss {report.loss:.6g}, "
                    f"difference {report.difference:.6g}")
        return {
            "loss": report.loss,
            "baseline_loss": report.baseline_loss,
            "difference": report.difference,
            "achieved_sparsity": mask.achieved_sparsity,
        }

    def _sweep_point(self, scores: ScoreSet, tile: TileShape, sparsity: float,
                     transformed: bool) -> List[Dict[str, Any]]:
        cfg = self.config
        mask = prune_scores(scores, PrunePlan(tile, sparsity, cfg.criterion))
        report = replace(report_for_mask(scores, mask), model=model_name(cfg.model), transformed=transformed)
        row = report.to_csv_row()
        row["total_score"] = report.total_score
        rows = [row]
        if cfg.per_layer:
            for layer_id, layer_loss in loss_by_layer(scores, mask).items():
                deleted = int(np.count_nonzero(~mask.element_keep(layer_id)))
                baseline = unstructured_loss({layer_id: scores[layer_id]}, deleted)
                rows.append(replace(report, layer_set=str(layer_id), loss=layer_loss,
                                    baseline_loss=baseline, difference=layer_loss - baseline).to_csv_row())
        logger.debug(f"Sweep point {tile} s={sparsity} transformed={transformed}: loss {report.loss:.6g}")
        return rows

    def run_sweep(self) -> Dict[str, Any]:
        """
        Loss of every (tile shape, sparsity) pair, with and without the transform

        Points run on up to TILEWISE_THREADS threads; rows are written in
        (tile order, sparsity ascending, untransformed first) order regardless.

        Returns:
            Dict with the report path, row count and the written DataFrame
        """
        cfg = self.config
        graph = self._load(cfg.model)
        variants = [(False, graph)]
        if cfg.transform != "none" or cfg.plan_in:
            transformed, _ = self._transform(graph)
            variants.append((True, transformed))

        with self.stage("prune"):
            scores = {flag: score_set(g, cfg.criterion) for flag, g in variants}
            points = [(tile, s, flag) for tile in cfg.tiles for s in cfg.sparsities for flag, _ in variants]
            if cfg.threads > 1:
                with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
                    results = list(pool.map(lambda p: self._sweep_point(scores[p[2]], *p), points))
            else:
                results = [self._sweep_point(scores[p[2]], *p) for p in points]

        with self.stage("report"):
            rows = [row for point_rows in results for row in point_rows]
            frame = write_report(rows, cfg.report)
            if cfg.summary:
                full = pd.DataFrame(rows)
                summary = summarize_sweep(full)
                os.makedirs(os.path.dirname(os.path.abspath(cfg.summary)), exist_ok=True)
                summary.to_csv(cfg.summary, index=False)
                logger.info(f"Wrote sweep summary ({len(summary)} rows) to {cfg.summary}")
        return {"report": cfg.report, "rows": len(frame), "frame": frame}

    def run_verify(self) -> Dict[str, Any]:
        """Compare a candidate model's outputs with the original's on seeded random inputs"""
        cfg = self.config
        original = self._load(cfg.model)
        candidate = self._load(cfg.candidate)
        with self.stage("verify"):
            result: PreservationResult = check_function_preservation(
                original, candidate, samples=cfg.samples, seed=cfg.seed,
                rtol=cfg.rtol, shape=cfg.input_shape,
            )
            if not result.passed:
                raise InvariantError(f"outputs differ: max relative error {result.max_rel_error:.3e} "
                                     f"exceeds rtol {cfg.rtol}")
        return {
            "samples": result.samples,
            "max_abs_error": result.max_abs_error,
            "max_rel_error": result.max_rel_error,
            "passed": result.passed,
        }


def create_pipeline_runner(config: RunConfig) -> PipelineRunner:
    """Create a pipeline runner"""
    return PipelineRunner(config)
