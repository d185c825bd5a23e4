import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

# Configure logging
logging.basicConfig(level=logging.INFO,
                   format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

# Add the project directory to sys.path
sys.path.append(str(Path(__file__).parent))

from modules.checkpoint import load_checkpoint
from modules.config import CANDIDATE_MODES, PRESETS, VARIANTS, RunConfig, load_run_config, preset_config
from modules.errors import ConfigError, DiRecError, EvaluationError
from modules.evaluation import (
    ModelScorer,
    across_head_variance,
    attention_heatmap_export,
    rank_stability,
    recommend,
    scaling_probe,
    write_jsonl,
)
from modules.graph_generator import generate_synthetic
from modules.monitor_graph import (
    MONITOR,
    RELATIONS,
    closure_violations,
    degree_distribution,
    dimension_correlation,
    init_node_features,
    load_graph,
    save_graph,
    split_edges,
    strict_subset_fraction,
)
from modules.pipeline import (
    CHECKPOINT_NAME,
    build_scorer,
    configs_from_checkpoint,
    evaluate_scorer,
    recommendation_scorer,
    run_ablation,
    scorer_from_checkpoint,
    train_variant,
)
from modules.run_manifest import RunManifest

PROG = "direc-gnn"

# Exit codes
EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_IO = 3


def _run_config(args) -> RunConfig:
    if getattr(args, "preset", None) and not args.config:
        cfg = preset_config(args.preset)
        return cfg.with_seed(args.seed) if args.seed is not None else cfg
    return load_run_config(args.config, args.seed)


def _monitor_ids(g, raw: Optional[str]) -> List[int]:
    """Comma-separated monitor indices or names; every monitor when omitted."""
    if not raw:
        return list(range(g.counts[MONITOR]))
    lookup = {name: i for i, name in enumerate(g.names[MONITOR])}
    ids = []
    for token in (t.strip() for t in raw.split(",") if t.strip()):
        if token.isdigit():
            ids.append(int(token))
        elif token in lookup:
            ids.append(lookup[token])
        else:
            raise EvaluationError(f"Unknown monitor '{token}'")
    return ids


# Commands

def cmd_generate(args) -> str:
    """Generate a synthetic graph with features and write it with its statistics."""
    cfg = _run_config(args)
    manifest = RunManifest(command="generate", config=cfg.to_dict(), seed=cfg.generator.seed)
    with manifest.timed("generate"):
        g = generate_synthetic(cfg.generator)
        g = init_node_features(g, cfg.generator.d_feat, cfg.generator.seed, external=args.embeddings)
    graph_path = save_graph(g, os.path.join(args.out, "graph.json"))

    correlations = dimension_correlation(g)
    histogram, edges = np.histogram(correlations, bins=10, range=(-1.0, 1.0))
    stats = {
        "counts": g.counts,
        "dimension_correlation": {
            "pairs": int(correlations.size),
            "bin_edges": edges.tolist(),
            "histogram": histogram.tolist(),
            "share_above_0.5": float(np.mean(correlations > 0.5)) if correlations.size else 0.0,
        },
        "edges": {relation: g.num_edges(relation) for relation in RELATIONS},
        "strict_subset_fraction": strict_subset_fraction(g),
        "closure_violations": closure_violations(g),
        "degree_distributions": [
            {key: value for key, value in degree_distribution(g, relation, side).items() if key not in ("degrees",)}
            for relation in RELATIONS
            for side in ("src", "dst")
        ],
    }
    stats_path = os.path.join(args.out, "graph_stats.json")
    with open(stats_path, "w", encoding="utf-8") as handle:
        json.dump(stats, handle, indent=2, default=float)

    manifest.record_artifact(graph_path)
    manifest.record_artifact(stats_path)
    manifest.write(args.out)
    return graph_path


def cmd_train(args) -> str:
    """Train one variant; the rolling checkpoint allows --resume."""
    cfg = _run_config(args)
    g = load_graph(args.graph)
    resume = None
    rolling = os.path.join(args.out, CHECKPOINT_NAME)
    if args.resume:
        if not os.path.exists(rolling):
            raise ConfigError(f"--resume given but no checkpoint at {rolling}")
        resume = load_checkpoint(rolling)
        # Model and loss come from the checkpoint; the epoch budget may be extended
        train_cfg = cfg.train
        cfg = configs_from_checkpoint(resume, cfg).with_seed(resume.seed)
        cfg.train = train_cfg.replace(seed=resume.seed)
        args.variant = resume.variant

    manifest = RunManifest(command="train", config=cfg.to_dict(), seed=cfg.seed, variant=args.variant)
    manifest.record_input(args.graph)
    split = split_edges(g, seed=cfg.seed)
    with manifest.timed("train"):
        _, best_path = train_variant(g, split, cfg, args.variant, out_dir=args.out, resume=resume)
    for path in (best_path, rolling, os.path.join(args.out, "train_log.csv")):
        if path and os.path.exists(path):
            manifest.record_artifact(path)
    manifest.write(args.out)
    return best_path


def cmd_eval(args) -> str:
    """Metric report plus optional rank-stability comparison and attention heatmaps."""
    cfg = _run_config(args)
    if args.candidates:
        cfg.eval = cfg.eval.replace(candidates=args.candidates)
    g = load_graph(args.graph)

    if args.checkpoint:
        scorer, split, cfg = scorer_from_checkpoint(args.checkpoint, g, cfg, args.variant)
        variant = args.variant or load_checkpoint(args.checkpoint).variant
    else:
        variant = args.variant or "cf"
        split = split_edges(g, seed=cfg.seed)
        scorer = build_scorer(variant, g, split, cfg)

    manifest = RunManifest(command="eval", config=cfg.to_dict(), seed=cfg.seed, variant=variant)
    manifest.record_input(args.graph)
    if args.checkpoint:
        manifest.record_input(args.checkpoint)

    with manifest.timed("evaluate"):
        run = evaluate_scorer(scorer, g, split, cfg, evidence_k=cfg.eval.evidence_k)
    report = dict(run.report)
    report["variant"] = variant
    report["candidates"] = cfg.eval.candidates

    if args.compare:
        other, _, other_cfg = scorer_from_checkpoint(args.compare, g, cfg)
        if other_cfg.seed != cfg.seed:
            raise EvaluationError("Compared checkpoints were trained on different splits")
        manifest.record_input(args.compare)
        with manifest.timed("compare"):
            other_run = evaluate_scorer(other, g, split, cfg)
        if [q.monitor for q in other_run.queries] != [q.monitor for q in run.queries]:
            raise EvaluationError("Compared runs did not rank the same queries")
        report["rank_stability"] = rank_stability(
            [r.dimensions for r in run.rankings],
            [r.dimensions for r in other_run.rankings],
            [q.relevant for q in run.queries],
        )

    if args.heatmap:
        if not isinstance(scorer, ModelScorer):
            raise EvaluationError(f"Attention heatmaps need a model variant, not '{variant}'")
        query = run.queries[0]
        records, subgraph = scorer.attention(query.monitor, query.candidates)
        report["attention_variance"] = across_head_variance(records)
        exports = []
        for relation in RELATIONS:
            path = os.path.join(args.out, "heatmaps", f"{relation}.csv")
            try:
                exports.append(attention_heatmap_export(records, relation, cfg.eval.heatmap_nodes, path, subgraph))
                manifest.record_artifact(path)
            except EvaluationError as e:
                logger.warning(f"No heatmap for {relation}: {str(e)}")
        report["heatmaps"] = exports

    rankings_path = write_jsonl([r.to_dict(g) for r in run.rankings], os.path.join(args.out, "rankings.jsonl"))
    report_path = os.path.join(args.out, "report.json")
    with open(report_path, "w", encoding="utf-8") as handle:
        json.dump(report, handle, indent=2)
    manifest.record_artifact(rankings_path)
    manifest.record_artifact(report_path)
    manifest.write(args.out)
    return report_path


def cmd_ablate(args) -> str:
    """Sweep table over the configured grid (and optionally the scaling probe)."""
    cfg = _run_config(args)
    if args.variant:
        cfg.ablate = cfg.ablate.replace(variants=tuple(v.strip() for v in args.variant.split(",")))
    g = load_graph(args.graph)
    manifest = RunManifest(command="ablate", config=cfg.to_dict(), seed=cfg.seed)
    manifest.record_input(args.graph)
    os.makedirs(args.out, exist_ok=True)

    with manifest.timed("ablate"):
        table = run_ablation(g, cfg)
    table_path = os.path.join(args.out, "ablation.csv")
    table.to_csv(table_path, index=False)
    manifest.record_artifact(table_path)

    if args.scaling:
        with manifest.timed("scaling"):
            scaling, fit = scaling_probe(
                cfg.eval.scaling_sizes, cfg.model, cfg.train, cfg.loss,
                epochs=cfg.eval.scaling_epochs, timeout=cfg.eval.scaling_timeout,
                generator_overrides={"d_feat": cfg.generator.d_feat},
            )
        scaling_path = os.path.join(args.out, "scaling.csv")
        scaling.to_csv(scaling_path, index=False)
        with open(os.path.join(args.out, "scaling_fit.json"), "w", encoding="utf-8") as handle:
            json.dump(fit, handle, indent=2)
        manifest.record_artifact(scaling_path)

    manifest.write(args.out)
    return table_path


def cmd_recommend(args) -> str:
    """Top-k unused dimensions for the requested monitors as JSON lines."""
    cfg = _run_config(args)
    g = load_graph(args.graph)
    params = None
    variant = args.variant
    if args.checkpoint:
        ckpt = load_checkpoint(args.checkpoint)
        cfg = configs_from_checkpoint(ckpt, cfg).with_seed(ckpt.seed)
        variant = variant or ckpt.variant
        params = ckpt.best_params or ckpt.params
    if variant is None:
        raise ConfigError("recommend needs --checkpoint or --variant cf")
    scorer = recommendation_scorer(variant, g, cfg, params)

    manifest = RunManifest(command="recommend", config=cfg.to_dict(), seed=cfg.seed, variant=variant)
    manifest.record_input(args.graph)
    if args.checkpoint:
        manifest.record_input(args.checkpoint)
    monitors = _monitor_ids(g, args.monitors)
    with manifest.timed("recommend"):
        results = recommend(scorer, g, monitors, k=args.k, evidence_k=cfg.eval.evidence_k)

    records = []
    for result in results:
        if result["success"]:
            records.append(result["data"].to_dict(g))
        else:
            records.append({"monitor": result["monitor"], "error": result["error"]})
    path = write_jsonl(records, os.path.join(args.out, "recommendations.jsonl"))
    failed = sum(1 for r in results if not r["success"])
    if failed:
        logger.warning(f"{failed} of {len(results)} monitor(s) had no recommendations")
    manifest.record_artifact(path)
    manifest.write(args.out)
    return path


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "recommend": cmd_recommend,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=PROG, description="Dimension recommendation for monitors.")
    subparsers = parser.add_subparsers(dest="command", required=True)

    def common(sub):
        sub.add_argument("--config", help="JSON run config (defaults to the desk preset)")
        sub.add_argument("--seed", type=int, help="global seed override")
        sub.add_argument("--out", required=True, help="output directory")
        return sub

    gen = common(subparsers.add_parser("generate", help="generate a synthetic graph"))
    gen.add_argument("--preset", choices=PRESETS, help="built-in preset when no --config is given")
    gen.add_argument("--embeddings", help="JSON {name: [floats]} overriding pseudo-embeddings")

    train = common(subparsers.add_parser("train", help="train a model variant"))
    train.add_argument("--graph", required=True)
    train.add_argument("--variant", choices=VARIANTS, default="full")
    train.add_argument("--resume", action="store_true", help="continue from <out>/checkpoint.json")

    ev = common(subparsers.add_parser("eval", help="evaluate a checkpoint or baseline"))
    ev.add_argument("--graph", required=True)
    ev.add_argument("--checkpoint")
    ev.add_argument("--variant", choices=VARIANTS)
    ev.add_argument("--candidates", choices=CANDIDATE_MODES)
    ev.add_argument("--compare", help="second checkpoint for rank-stability comparison")
    ev.add_argument("--heatmap", action="store_true", help="export attention heatmaps")

    ab = common(subparsers.add_parser("ablate", help="run an ablation sweep"))
    ab.add_argument("--graph", required=True)
    ab.add_argument("--variant", help="comma-separated variants overriding the sweep config")
    ab.add_argument("--scaling", action="store_true", help="also run the scaling probe")

    rec = common(subparsers.add_parser("recommend", help="recommend dimensions for monitors"))
    rec.add_argument("--graph", required=True)
    rec.add_argument("--checkpoint")
    rec.add_argument("--variant", choices=VARIANTS)
    rec.add_argument("--monitors", help="comma-separated monitor indices or names (default: all)")
    rec.add_argument("--k", type=int, default=5)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    Entry point. Prints the output path on success.

    Returns:
        int: exit code (0 ok, 1 unexpected, 2 config, 3 I/O, 4 divergence, 5 width mismatch)
    """
    args = build_parser().parse_args(argv)
    try:
        output = COMMANDS[args.command](args)
    except DiRecError as e:
        logger.error(f"{args.command} failed: {str(e)}")
        return e.exit_code
    except OSError as e:
        logger.error(f"{args.command} failed with an I/O error: {str(e)}")
        return EXIT_IO
    except Exception as e:
        logger.exception(f"Unexpected error in {args.command}: {str(e)}")
        return EXIT_FAILURE
    print(output)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
