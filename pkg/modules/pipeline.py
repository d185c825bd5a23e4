import logging
import os
import time
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from modules.baselines import BaselineConfig, CollaborativeScorer, TwoTowerScorer, train_two_tower
from modules.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from modules.config import RunConfig, ablation_cells, apply_variant, is_baseline
from modules.errors import ConfigError, DiRecError
from modules.evaluation import EvaluationRun, ModelScorer, build_queries, evaluate
from modules.model import ModelConfig, check_compatible
from modules.monitor_graph import EdgeSplit, MonitorEntityGraph, split_edges
from modules.losses import LossConfig
from modules.trainer import TrainConfig, TrainResult, history_frame, message_graphs, run_training

# Configure logging
logging.basicConfig(level=logging.INFO,
                   format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

CHECKPOINT_NAME = "checkpoint.json"
BEST_NAME = "best.json"
LOG_NAME = "train_log.csv"
ABLATION_COLUMNS = [
    "variant", "path_length", "paths_per_node", "lambda_al", "seed",
    "status", "reason", "mrr", "ndcg@5", "recall@5", "wall_time",
]


def graph_meta(g: MonitorEntityGraph) -> Dict[str, Any]:
    return {"counts": g.counts, "d_feat": g.d_feat, "seed": g.seed}


def variant_configs(run_cfg: RunConfig, variant: str) -> Tuple[ModelConfig, LossConfig]:
    if is_baseline(variant):
        return run_cfg.model, run_cfg.loss
    return apply_variant(run_cfg.model, run_cfg.loss, variant)


def train_variant(
    g: MonitorEntityGraph,
    split: EdgeSplit,
    run_cfg: RunConfig,
    variant: str,
    out_dir: Optional[str] = None,
    resume: Optional[Checkpoint] = None,
) -> Tuple[Dict[str, Any], Optional[str]]:
    """
    Train one variant and optionally persist it.

    Returns:
        (best parameters, path of the best checkpoint or None)

    Raises:
        ConfigError: "cf" has nothing to train
    """
    if variant == "cf":
        raise ConfigError("The cf baseline has no parameters to train; evaluate it directly")
    meta = {"graph_meta": graph_meta(g), "variant": variant}

    if variant == "mlp":
        params, losses = train_two_tower(g, split, run_cfg.baseline, run_cfg.seed)
        best_path = None
        if out_dir:
            best_path = save_checkpoint(Checkpoint(
                params=params,
                train_state={"history": [{"epoch": i, "total": loss} for i, loss in enumerate(losses)]},
                configs={"baseline": run_cfg.baseline.to_dict()},
                graph_meta=meta["graph_meta"],
                seed=run_cfg.seed,
                variant=variant,
            ), os.path.join(out_dir, BEST_NAME))
        return params, best_path

    model_cfg, loss_cfg = variant_configs(run_cfg, variant)
    meta["configs"] = {"model": model_cfg.to_dict(), "loss": loss_cfg.to_dict(), "train": run_cfg.train.to_dict()}
    checkpoint_path = os.path.join(out_dir, CHECKPOINT_NAME) if out_dir else None
    log_path = os.path.join(out_dir, LOG_NAME) if out_dir else None
    result: TrainResult = run_training(
        g, split, model_cfg, run_cfg.train, loss_cfg,
        checkpoint_path=checkpoint_path, log_path=log_path, resume=resume, checkpoint_meta=meta,
    )
    best_path = None
    if out_dir:
        best_path = save_checkpoint(Checkpoint(
            params=result.best_params,
            train_state=result.state.to_dict(),
            configs=meta["configs"],
            graph_meta=meta["graph_meta"],
            seed=run_cfg.seed,
            variant=variant,
        ), os.path.join(out_dir, BEST_NAME))
        history_frame(result.history).to_csv(log_path, index=False)
    return result.best_params, best_path


def configs_from_checkpoint(ckpt: Checkpoint, run_cfg: RunConfig) -> RunConfig:
    """Run config with the model/loss/train sections a checkpoint was trained with."""
    sections = {}
    for name, cls in (("model", ModelConfig), ("loss", LossConfig), ("train", TrainConfig), ("baseline", BaselineConfig)):
        sections[name] = cls.from_dict(ckpt.configs[name]) if name in ckpt.configs else getattr(run_cfg, name)
    return RunConfig(
        preset=run_cfg.preset,
        generator=run_cfg.generator,
        eval=run_cfg.eval,
        ablate=run_cfg.ablate,
        **sections,
    )


def build_scorer(
    variant: str,
    g: MonitorEntityGraph,
    split: EdgeSplit,
    run_cfg: RunConfig,
    params: Optional[Dict[str, Any]] = None,
):
    """
    Scorer for a variant over the evaluation message graph.

    Model variants need ``params``; "mlp" trains in place when none are given.
    """
    _, g_eval = message_graphs(g, split)
    if variant == "cf":
        return CollaborativeScorer(g_eval, run_cfg.baseline.neighbours)
    if variant == "mlp":
        if params is None:
            params, _ = train_two_tower(g, split, run_cfg.baseline, run_cfg.seed)
        return TwoTowerScorer(g, params)
    if params is None:
        raise ConfigError(f"Variant '{variant}' needs trained parameters (pass --checkpoint)")
    model_cfg, _ = variant_configs(run_cfg, variant)
    check_compatible(params, model_cfg, g)
    return ModelScorer(g_eval, params, model_cfg, seed=run_cfg.seed)


def scorer_from_checkpoint(path: str, g: MonitorEntityGraph, run_cfg: RunConfig, variant: Optional[str] = None):
    """
    Load a checkpoint and build (scorer, split, run config) on the split it was trained with.
    """
    ckpt = load_checkpoint(path)
    variant = variant or ckpt.variant
    run_cfg = configs_from_checkpoint(ckpt, run_cfg).with_seed(ckpt.seed)
    split = split_edges(g, seed=ckpt.seed)
    params = ckpt.best_params or ckpt.params
    if variant == "cf":
        params = None
    return build_scorer(variant, g, split, run_cfg, params), split, run_cfg


def evaluate_scorer(scorer, g: MonitorEntityGraph, split: EdgeSplit, run_cfg: RunConfig, evidence_k: int = 0) -> EvaluationRun:
    _, g_eval = message_graphs(g, split)
    queries = build_queries(g, split, run_cfg.eval.candidates, run_cfg.eval.pool_size, seed=run_cfg.seed)
    return evaluate(scorer, g_eval, queries, evidence_k=evidence_k)


def run_ablation(g: MonitorEntityGraph, run_cfg: RunConfig) -> pd.DataFrame:
    """
    Train and evaluate every sweep cell; infeasible or failing cells are kept
    as skipped rows with their reason.
    """
    rows: List[Dict[str, Any]] = []
    cells = ablation_cells(run_cfg.ablate)
    logger.info(f"Running {len(cells)} ablation cell(s)")
    for cell in cells:
        row = dict(cell)
        row.update({"status": "ok", "reason": "", "mrr": np.nan, "ndcg@5": np.nan, "recall@5": np.nan})
        started = time.perf_counter()
        try:
            cfg = run_cfg.with_seed(cell["seed"])
            model_changes = {}
            if cell["path_length"] is not None:
                model_changes = {"path_lengths": (cell["path_length"],), "paths_per_node": cell["paths_per_node"]}
            loss_changes = {"lambda_al": cell["lambda_al"]} if cell["lambda_al"] is not None else {}
            cfg = RunConfig(
                preset=cfg.preset, generator=cfg.generator,
                model=cfg.model.replace(**model_changes), loss=cfg.loss.replace(**loss_changes),
                train=cfg.train, eval=cfg.eval, ablate=cfg.ablate, baseline=cfg.baseline,
            )
            split = split_edges(g, seed=cell["seed"])
            params = None if cell["variant"] == "cf" else train_variant(g, split, cfg, cell["variant"])[0]
            scorer = build_scorer(cell["variant"], g, split, cfg, params)
            report = evaluate_scorer(scorer, g, split, cfg).report
            row.update({"mrr": report["mrr"], "ndcg@5": report["ndcg@5"], "recall@5": report["recall@5"]})
        except DiRecError as e:
            logger.warning(f"Skipping ablation cell {cell}: {str(e)}")
            row.update({"status": "skipped", "reason": str(e)})
        row["wall_time"] = time.perf_counter() - started
        rows.append(row)
    return pd.DataFrame(rows, columns=ABLATION_COLUMNS)


def recommendation_scorer(variant: str, g: MonitorEntityGraph, run_cfg: RunConfig, params: Optional[Dict[str, Any]] = None):
    """Scorer over every known link of ``g``, for serving recommendations."""
    if variant == "cf":
        return CollaborativeScorer(g, run_cfg.baseline.neighbours)
    if variant == "mlp":
        if params is None:
            raise ConfigError("The mlp baseline needs a trained checkpoint to recommend")
        return TwoTowerScorer(g, params)
    if params is None:
        raise ConfigError(f"Variant '{variant}' needs trained parameters (pass --checkpoint)")
    model_cfg, _ = variant_configs(run_cfg, variant)
    check_compatible(params, model_cfg, g)
    return ModelScorer(g, params, model_cfg, seed=run_cfg.seed)
