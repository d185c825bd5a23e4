import concurrent.futures
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from modules.autograd import Tensor, sigmoid
from modules.errors import EvaluationError, SamplingError, ScalingTimeoutError
from modules.graph_generator import GeneratorConfig, generate_synthetic
from modules.model import AttentionRecord, ModelConfig, batch_logits, forward, prepare_batch
from modules.monitor_graph import (
    DIMENSION,
    MONITOR,
    MONITOR_DIMENSION,
    MONITOR_METRIC,
    METRIC_DIMENSION,
    RELATIONS,
    EdgeSplit,
    MonitorEntityGraph,
    init_node_features,
    split_edges,
)
from modules.random_streams import make_rng, name_hash
from modules.settings import worker_threads
from modules.trainer import run_training

# Configure logging
logging.basicConfig(level=logging.INFO,
                   format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

REPORT_KS = (1, 3, 5)
NDCG_K = 5
DEFAULT_POOL_SIZE = 50
EVIDENCE_K = 3

# Monitor-degree buckets (inclusive bounds; None = open ended)
DEGREE_BUCKETS: Tuple[Tuple[int, Optional[int]], ...] = ((0, 1), (2, 3), (4, 7), (8, 15), (16, None))


def bucket_label(bucket: Tuple[int, Optional[int]]) -> str:
    low, high = bucket
    return f"{low}+" if high is None else f"{low}-{high}"


def bucket_of(degree: int, buckets: Sequence[Tuple[int, Optional[int]]] = DEGREE_BUCKETS) -> str:
    for bucket in buckets:
        low, high = bucket
        if degree >= low and (high is None or degree <= high):
            return bucket_label(bucket)
    raise EvaluationError(f"Degree {degree} falls outside every bucket")


# Scorers

class ModelScorer:
    """
    Scores candidate dimensions for one monitor with a trained network.

    Every query samples its own subgraph and paths from keys derived from the
    query, so a score does not depend on which other queries run alongside.
    """

    name = "direc-gnn"

    def __init__(self, g: MonitorEntityGraph, params: Dict[str, Tensor], cfg: ModelConfig, seed: int = 0):
        self.g = g
        self.params = params
        self.cfg = cfg
        self.seed = seed
        self.features = g.feature_matrix()

    def _batch(self, monitor: int, candidates: np.ndarray):
        pairs = np.stack([np.full(candidates.size, monitor, dtype=np.int64), candidates], axis=1)
        key = name_hash(",".join(str(int(c)) for c in candidates))
        return prepare_batch(self.g, pairs, self.cfg, self.seed, stream=("query", int(monitor), key), path_stream=("query",))

    def score(self, monitor: int, candidates: np.ndarray) -> np.ndarray:
        candidates = np.asarray(candidates, dtype=np.int64)
        batch = self._batch(monitor, candidates)
        logits, _, _ = batch_logits(batch, self.params, self.cfg, self.features)
        return sigmoid(logits).data.copy()

    def attention(self, monitor: int, candidates: np.ndarray):
        """(records, subgraph) of the forward pass behind a query."""
        candidates = np.asarray(candidates, dtype=np.int64)
        batch = self._batch(monitor, candidates)
        _, records = forward(batch.subgraph, self.params, self.cfg, self.features, batch.targets, batch.paths)
        return records, batch.subgraph


# Rankings

@dataclass
class RankedRecommendation:
    monitor: int
    items: List[Tuple[int, float]]
    candidate_set: str
    evidence: Dict[int, List[int]] = field(default_factory=dict)

    @property
    def dimensions(self) -> List[int]:
        return [d for d, _ in self.items]

    def to_dict(self, g: Optional[MonitorEntityGraph] = None) -> Dict[str, Any]:
        rows = []
        for rank, (dim, score) in enumerate(self.items, start=1):
            row = {"rank": rank, "dimension": dim, "score": score, "evidence": self.evidence.get(dim, [])}
            if g is not None:
                row["name"] = g.names[DIMENSION][dim]
                row["evidence_names"] = [g.names[MONITOR][m] for m in row["evidence"]]
            rows.append(row)
        data = {"monitor": self.monitor, "candidate_set": self.candidate_set, "recommendations": rows}
        if g is not None:
            data["monitor_name"] = g.names[MONITOR][self.monitor]
        return data


def similar_monitors(g: MonitorEntityGraph, monitor: int, dimension: int, k: int = EVIDENCE_K) -> List[int]:
    """Up to k monitors holding ``dimension``, most similar to ``monitor`` by feature cosine."""
    holders = g.neighbors(MONITOR_DIMENSION, dimension, reverse=True)
    holders = holders[holders != monitor]
    if holders.size == 0 or g.features is None:
        return [int(m) for m in holders[:k]]
    feats = g.features[MONITOR]
    query = feats[monitor]
    rows = feats[holders]
    norms = np.linalg.norm(rows, axis=1) * max(np.linalg.norm(query), 1e-12)
    sims = rows @ query / np.where(norms > 0, norms, 1.0)
    order = np.lexsort((holders, -sims))
    return [int(m) for m in holders[order[:k]]]


def rank_candidates(
    scorer,
    g: MonitorEntityGraph,
    monitor: int,
    candidates: Sequence[int],
    candidate_set: str = "custom",
    evidence_k: int = 0,
) -> RankedRecommendation:
    """
    Score and order candidate dimensions for a monitor.

    Sorting is by score descending with ties broken by ascending dimension id;
    candidates are deduplicated and sorted first, so input order is irrelevant.

    Raises:
        EvaluationError: unknown monitor or empty candidate set
    """
    if not 0 <= int(monitor) < g.counts[MONITOR]:
        raise EvaluationError(f"Unknown monitor {monitor}")
    candidates = np.unique(np.asarray(candidates, dtype=np.int64))
    if candidates.size == 0:
        raise EvaluationError(f"No candidates to rank for monitor {monitor}")
    if candidates.min() < 0 or candidates.max() >= g.counts[DIMENSION]:
        raise EvaluationError(f"Candidate dimension outside 0..{g.counts[DIMENSION] - 1}")
    scores = np.asarray(scorer.score(int(monitor), candidates), dtype=np.float64)
    order = np.lexsort((candidates, -scores))
    items = [(int(candidates[i]), float(scores[i])) for i in order]
    evidence = {}
    if evidence_k:
        evidence = {dim: similar_monitors(g, int(monitor), dim, evidence_k) for dim, _ in items}
    return RankedRecommendation(monitor=int(monitor), items=items, candidate_set=candidate_set, evidence=evidence)


# Metrics

def _relevant_ranks(ranking: Sequence[int], relevant: Sequence[int]) -> List[int]:
    position = {int(item): i + 1 for i, item in enumerate(ranking)}
    relevant = set(int(r) for r in relevant)
    if not relevant:
        raise EvaluationError("Every query needs at least one relevant item")
    missing = relevant - set(position)
    if missing:
        raise EvaluationError(f"Relevant item(s) {sorted(missing)} absent from the candidates")
    return sorted(position[r] for r in relevant)


def _check_queries(rankings, relevants):
    if len(rankings) != len(relevants):
        raise EvaluationError(f"{len(rankings)} rankings but {len(relevants)} relevance sets")
    if not rankings:
        raise EvaluationError("No queries to evaluate")


def metric_mrr(rankings: Sequence[Sequence[int]], relevants: Sequence[Sequence[int]]) -> float:
    """Mean reciprocal rank of the first relevant item."""
    _check_queries(rankings, relevants)
    return float(np.mean([1.0 / _relevant_ranks(r, rel)[0] for r, rel in zip(rankings, relevants)]))


def metric_ndcg(rankings: Sequence[Sequence[int]], relevants: Sequence[Sequence[int]], k: int = NDCG_K) -> float:
    """Binary-relevance NDCG@k with discount 1 / log2(rank + 1)."""
    if k < 1:
        raise EvaluationError(f"k must be >= 1, got {k}")
    _check_queries(rankings, relevants)
    values = []
    for ranking, relevant in zip(rankings, relevants):
        ranks = _relevant_ranks(ranking, relevant)
        dcg = sum(1.0 / np.log2(rank + 1) for rank in ranks if rank <= k)
        ideal = sum(1.0 / np.log2(i + 1) for i in range(1, min(len(ranks), k) + 1))
        values.append(dcg / ideal)
    return float(np.mean(values))


def metric_recall_hr(
    rankings: Sequence[Sequence[int]],
    relevants: Sequence[Sequence[int]],
    k: int,
) -> Tuple[float, float, float]:
    """
    Returns:
        (recall@k, hitrate@k, precision@k), each averaged over queries
    """
    if k < 1:
        raise EvaluationError(f"k must be >= 1, got {k}")
    _check_queries(rankings, relevants)
    recalls, hits, precisions = [], [], []
    for ranking, relevant in zip(rankings, relevants):
        ranks = _relevant_ranks(ranking, relevant)
        found = sum(1 for rank in ranks if rank <= k)
        recalls.append(found / len(ranks))
        hits.append(1.0 if found else 0.0)
        precisions.append(found / k)
    return float(np.mean(recalls)), float(np.mean(hits)), float(np.mean(precisions))


def build_metric_report(
    rankings: Sequence[Sequence[int]],
    relevants: Sequence[Sequence[int]],
    monitors: Sequence[int],
    degrees: Sequence[int],
    ks: Sequence[int] = REPORT_KS,
    ndcg_k: int = NDCG_K,
    buckets: Sequence[Tuple[int, Optional[int]]] = DEGREE_BUCKETS,
) -> Dict[str, Any]:
    """
    Full metric report with per-query reciprocal ranks and a monitor-degree breakdown.

    Hit rate and precision are reported under separate, explicit keys.
    """
    _check_queries(rankings, relevants)
    report: Dict[str, Any] = {"n_queries": len(rankings)}
    for k in ks:
        recall, hitrate, precision = metric_recall_hr(rankings, relevants, k)
        report[f"hr@{k}"] = hitrate
        report[f"precision@{k}"] = precision
        report[f"recall@{k}"] = recall
    report["mrr"] = metric_mrr(rankings, relevants)
    report[f"ndcg@{ndcg_k}"] = metric_ndcg(rankings, relevants, ndcg_k)

    queries = []
    for ranking, relevant, monitor, degree in zip(rankings, relevants, monitors, degrees):
        first = _relevant_ranks(ranking, relevant)[0]
        queries.append({
            "monitor": int(monitor),
            "degree": int(degree),
            "bucket": bucket_of(int(degree), buckets),
            "first_relevant_rank": first,
            "reciprocal_rank": 1.0 / first,
        })
    report["queries"] = queries

    rows = []
    frame = pd.DataFrame(queries)
    for bucket in buckets:
        label = bucket_label(bucket)
        part = frame[frame["bucket"] == label]
        rows.append({
            "bucket": label,
            "n_queries": int(len(part)),
            "mrr": float(part["reciprocal_rank"].mean()) if len(part) else None,
        })
    report["buckets"] = rows
    return report


def rank_stability(
    rankings_a: Sequence[Sequence[int]],
    rankings_b: Sequence[Sequence[int]],
    relevants: Optional[Sequence[Sequence[int]]] = None,
) -> Dict[str, Any]:
    """
    Rank change of each item (relevant items only when ``relevants`` is given) from a to b.

    A negative delta means the item moved up in b.

    Raises:
        EvaluationError: different query counts or candidate sets
    """
    if len(rankings_a) != len(rankings_b):
        raise EvaluationError(f"Query sets differ: {len(rankings_a)} vs {len(rankings_b)} queries")
    if relevants is not None and len(relevants) != len(rankings_a):
        raise EvaluationError("Relevance sets do not match the queries")
    deltas = []
    for q, (a, b) in enumerate(zip(rankings_a, rankings_b)):
        if sorted(map(int, a)) != sorted(map(int, b)):
            raise EvaluationError(f"Query {q} ranks different candidate sets")
        pos_a = {int(item): i + 1 for i, item in enumerate(a)}
        pos_b = {int(item): i + 1 for i, item in enumerate(b)}
        items = pos_a.keys() if relevants is None else [int(r) for r in relevants[q]]
        deltas.extend(pos_b[item] - pos_a[item] for item in sorted(items))

    deltas = np.array(deltas, dtype=np.int64)
    values, counts = np.unique(deltas, return_counts=True)
    total = max(deltas.size, 1)
    return {
        "deltas": deltas.tolist(),
        "histogram": {int(v): int(c) for v, c in zip(values, counts)},
        "improved": float(np.count_nonzero(deltas < 0)) / total,
        "unchanged": float(np.count_nonzero(deltas == 0)) / total,
        "worsened": float(np.count_nonzero(deltas > 0)) / total,
    }


def sparsity_gain(
    report_with_rwa: Dict[str, Any],
    report_without: Dict[str, Any],
    degree_buckets: Sequence[Tuple[int, Optional[int]]] = DEGREE_BUCKETS,
) -> Dict[str, Optional[float]]:
    """
    MRR difference (with minus without) per monitor-degree bucket.

    Raises:
        EvaluationError: the reports cover different queries or bucket them differently
    """
    a, b = report_with_rwa["queries"], report_without["queries"]
    if [(q["monitor"], q["degree"]) for q in a] != [(q["monitor"], q["degree"]) for q in b]:
        raise EvaluationError("Reports do not cover identical queries")
    gains = {}
    for bucket in degree_buckets:
        label = bucket_label(bucket)
        rr_a = [q["reciprocal_rank"] for q in a if bucket_of(q["degree"], degree_buckets) == label]
        rr_b = [q["reciprocal_rank"] for q in b if bucket_of(q["degree"], degree_buckets) == label]
        if len(rr_a) != len(rr_b):
            raise EvaluationError(f"Bucket {label} is misaligned between reports")
        gains[label] = float(np.mean(rr_a) - np.mean(rr_b)) if rr_a else None
    return gains


# Attention maps

def across_head_variance(records: Sequence[AttentionRecord]) -> Dict[str, float]:
    """Mean across-head variance of attention per relation (0 for a single head)."""
    sums = {relation: [] for relation in RELATIONS}
    for record in records:
        alpha = record.alpha.data
        if alpha.size == 0:
            continue
        per_edge = alpha.var(axis=1) if alpha.shape[1] > 1 else np.zeros(alpha.shape[0])
        for relation in RELATIONS:
            mask = record.relation_mask(relation)
            if mask.any():
                sums[relation].append(float(per_edge[mask].mean()))
    return {relation: float(np.mean(values)) for relation, values in sums.items() if values}


def attention_heatmap_export(
    records: Sequence[AttentionRecord],
    relation: str,
    node_sample: Union[int, Sequence[int]],
    path: str,
    subgraph=None,
    layer: int = -1,
) -> Dict[str, Any]:
    """
    Write the head-averaged attention matrix (receivers × senders) of one relation as CSV.

    Args:
        records: attention records of an evaluation forward
        relation: relation to export
        node_sample: number of receivers (lowest local ids first) or explicit local ids
        path: CSV destination
        subgraph: when given, rows and columns are labelled "type:index"
        layer: which layer's record to export

    Returns:
        dict: path, relation, shape and the across-head variance of that relation

    Raises:
        EvaluationError: the relation has no edges in the records
    """
    record = records[layer]
    mask = record.relation_mask(relation)
    if not mask.any():
        raise EvaluationError(f"Relation {relation} has no attention edges in this batch")
    receivers = record.receivers[mask]
    senders = record.senders[mask]
    mean_alpha = record.alpha.data[mask].mean(axis=1)

    if isinstance(node_sample, (int, np.integer)):
        chosen = np.unique(receivers)[: int(node_sample)]
    else:
        chosen = np.unique(np.asarray(node_sample, dtype=np.int64))
    keep = np.isin(receivers, chosen)
    frame = pd.DataFrame({"receiver": receivers[keep], "sender": senders[keep], "alpha": mean_alpha[keep]})
    matrix = frame.pivot_table(index="receiver", columns="sender", values="alpha", aggfunc="sum", fill_value=0.0)
    if subgraph is not None:
        label = lambda local: "{}:{}".format(*subgraph.global_node(int(local)))
        matrix.index = [label(i) for i in matrix.index]
        matrix.columns = [label(c) for c in matrix.columns]

    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    matrix.to_csv(path)
    variance = across_head_variance(records).get(relation, 0.0)
    logger.info(f"Wrote {matrix.shape[0]}x{matrix.shape[1]} attention map for {relation} to {path}")
    return {"path": path, "relation": relation, "shape": list(matrix.shape), "variance": variance}


# Query construction and evaluation runs

@dataclass
class Query:
    monitor: int
    candidates: np.ndarray
    relevant: List[int]
    candidate_set: str


def build_queries(
    g: MonitorEntityGraph,
    split: EdgeSplit,
    mode: str = "fixed",
    pool_size: int = DEFAULT_POOL_SIZE,
    seed: int = 0,
    which: str = "test",
) -> List[Query]:
    """
    Candidate sets for evaluation.

    "fixed": one query per held-out positive with its fixed negatives.
    "pool": one query per monitor with all its held-out positives plus up to
    ``pool_size`` dimensions not linked to it in ``g``.
    """
    positives = split.test if which == "test" else split.validation
    negatives = split.test_negatives if which == "test" else split.val_negatives
    if mode == "fixed":
        return [
            Query(int(m), np.unique(np.concatenate([[d], negatives[i]])), [int(d)], f"fixed:{which}:{negatives.shape[1]}")
            for i, (m, d) in enumerate(positives)
        ]
    if mode != "pool":
        raise EvaluationError(f"Unknown candidate mode '{mode}' (use 'fixed' or 'pool')")

    queries = []
    n_dims = g.counts[DIMENSION]
    for monitor in np.unique(positives[:, 0]):
        relevant = sorted(int(d) for d in positives[positives[:, 0] == monitor, 1])
        linked = g.neighbors(MONITOR_DIMENSION, int(monitor))
        allowed = np.setdiff1d(np.arange(n_dims), linked, assume_unique=True)
        rng = make_rng(seed, "pool", int(monitor))
        pool = rng.choice(allowed, size=min(pool_size, allowed.size), replace=False) if allowed.size else np.zeros(0, np.int64)
        candidates = np.unique(np.concatenate([relevant, pool]).astype(np.int64))
        queries.append(Query(int(monitor), candidates, relevant, f"pool:{which}:{pool_size}"))
    return queries


def _run_query(scorer, g: MonitorEntityGraph, query: Query, evidence_k: int) -> Dict[str, Any]:
    try:
        ranked = rank_candidates(scorer, g, query.monitor, query.candidates, query.candidate_set, evidence_k)
        return {"success": True, "data": ranked}
    except (EvaluationError, SamplingError) as e:
        logger.warning(f"Query for monitor {query.monitor} failed: {str(e)}")
        return {"success": False, "error": str(e), "monitor": query.monitor}


@dataclass
class EvaluationRun:
    queries: List[Query]
    rankings: List[RankedRecommendation]
    failures: List[Dict[str, Any]]
    report: Dict[str, Any]


def evaluate(
    scorer,
    g_known: MonitorEntityGraph,
    queries: List[Query],
    workers: Optional[int] = None,
    evidence_k: int = 0,
) -> EvaluationRun:
    """
    Rank every query (in parallel) and reduce to a metric report.

    Args:
        scorer: object with score(monitor, candidates) -> scores
        g_known: graph of known links, used for degree buckets and evidence
        queries: candidate sets
        workers: thread count (default: DIRECGNN_THREADS or CPU count)
        evidence_k: similar-monitor evidence per recommended dimension

    Returns:
        EvaluationRun
    """
    workers = workers or worker_threads()
    disable = not sys.stderr.isatty()
    if workers > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(tqdm(
                executor.map(lambda q: _run_query(scorer, g_known, q, evidence_k), queries),
                total=len(queries), desc="queries", file=sys.stderr, disable=disable,
            ))
    else:
        results = [_run_query(scorer, g_known, q, evidence_k) for q in tqdm(queries, desc="queries", file=sys.stderr, disable=disable)]

    kept_queries, rankings, failures = [], [], []
    for query, result in zip(queries, results):
        if result["success"]:
            kept_queries.append(query)
            rankings.append(result["data"])
        else:
            failures.append({"monitor": query.monitor, "error": result["error"]})
    if not rankings:
        raise EvaluationError("Every evaluation query failed")

    degrees = g_known.degree(MONITOR_DIMENSION, "src")
    report = build_metric_report(
        [r.dimensions for r in rankings],
        [q.relevant for q in kept_queries],
        [q.monitor for q in kept_queries],
        [int(degrees[q.monitor]) for q in kept_queries],
    )
    report["failures"] = failures
    report["scorer"] = getattr(scorer, "name", type(scorer).__name__)
    return EvaluationRun(queries=kept_queries, rankings=rankings, failures=failures, report=report)


def recommendation_candidates(g: MonitorEntityGraph, monitor: int) -> np.ndarray:
    """
    Dimensions emitted by the monitor's metrics that it does not use yet.

    Raises:
        EvaluationError: the monitor has no metric edges
    """
    metrics = g.neighbors(MONITOR_METRIC, monitor)
    if metrics.size == 0:
        raise EvaluationError(f"Monitor {monitor} has no metric edges")
    emitted = np.unique(np.concatenate([g.neighbors(METRIC_DIMENSION, int(k)) for k in metrics]))
    return np.setdiff1d(emitted, g.neighbors(MONITOR_DIMENSION, monitor), assume_unique=True)


def recommend(scorer, g: MonitorEntityGraph, monitors: Sequence[int], k: int = 5, evidence_k: int = EVIDENCE_K) -> List[Dict[str, Any]]:
    """
    Top-k unused dimensions per monitor, one result record per monitor.

    Monitors without metric edges or without any unused emitted dimension
    come back as failed records and are skipped.
    """
    if k < 1:
        raise EvaluationError(f"k must be >= 1, got {k}")
    results = []
    for monitor in monitors:
        try:
            if not 0 <= int(monitor) < g.counts[MONITOR]:
                raise EvaluationError(f"Unknown monitor {monitor}")
            candidates = recommendation_candidates(g, int(monitor))
            if candidates.size == 0:
                raise EvaluationError(f"Monitor {monitor} already uses every emitted dimension")
            ranked = rank_candidates(scorer, g, int(monitor), candidates, "closure", evidence_k)
            ranked.items = ranked.items[:k]
            ranked.evidence = {d: ranked.evidence.get(d, []) for d, _ in ranked.items}
            results.append({"success": True, "data": ranked})
        except EvaluationError as e:
            logger.warning(f"Skipping monitor {monitor}: {str(e)}")
            results.append({"success": False, "error": str(e), "monitor": int(monitor)})
    return results


def write_jsonl(records: Sequence[Dict[str, Any]], path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record) + "\n")
    return path


# Scaling

def linear_fit(x: Sequence[float], y: Sequence[float]) -> Dict[str, Any]:
    """Least-squares line through (x, y); "n/a" entries when fewer than two points."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size < 2 or np.unique(x).size < 2:
        return {"slope": "n/a", "intercept": "n/a", "r2": "n/a"}
    slope, intercept = np.polyfit(x, y, 1)
    predicted = slope * x + intercept
    ss_res = float(np.sum((y - predicted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return {"slope": float(slope), "intercept": float(intercept), "r2": float(r2)}


def scaling_probe(
    sizes: Sequence[int],
    model_cfg: ModelConfig,
    train_cfg,
    loss_cfg=None,
    epochs: int = 1,
    timeout: Optional[float] = None,
    generator_overrides: Optional[Dict[str, Any]] = None,
) -> Tuple[pd.DataFrame, Dict[str, Any]]:
    """
    Time fixed-epoch training on bounded-degree graphs of growing size.

    Args:
        sizes: ascending monitor counts
        model_cfg, train_cfg, loss_cfg: training configuration
        epochs: epochs per size
        timeout: per-size budget in seconds
        generator_overrides: extra GeneratorConfig fields (e.g. d_feat)

    Returns:
        (table with size, edges, wall_time; linear fit of wall_time on size)

    Raises:
        ScalingTimeoutError: a size exceeded the budget
    """
    sizes = [int(s) for s in sizes]
    if not sizes or any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError(f"sizes must be non-empty and strictly ascending, got {sizes}")

    rows = []
    for size in tqdm(sizes, desc="scaling", file=sys.stderr, disable=not sys.stderr.isatty()):
        gen_cfg = GeneratorConfig.scaling(size, **dict({"seed": train_cfg.seed}, **(generator_overrides or {})))
        g = init_node_features(generate_synthetic(gen_cfg), gen_cfg.d_feat, gen_cfg.seed)
        split = split_edges(g, seed=train_cfg.seed)
        started = time.perf_counter()
        run_training(g, split, model_cfg, train_cfg.replace(max_epochs=epochs), loss_cfg)
        elapsed = time.perf_counter() - started
        edges = sum(g.num_edges(r) for r in RELATIONS)
        rows.append({"size": size, "edges": edges, "wall_time": elapsed})
        logger.info(f"Scaling probe: {size} monitors, {edges} edges, {elapsed:.2f}s")
        if timeout is not None and elapsed > timeout:
            raise ScalingTimeoutError(f"Size {size} took {elapsed:.1f}s, budget {timeout:.1f}s")

    table = pd.DataFrame(rows, columns=["size", "edges", "wall_time"])
    return table, linear_fit(table["size"], table["wall_time"])
