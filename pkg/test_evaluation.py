"""
Tests for ranking, ranking metrics, query construction, attention exports and recommendations.
"""

import logging
import os
import sys

import numpy as np
import pandas as pd
import pytest

# Configure logging
logging.basicConfig(level=logging.INFO,
                   format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from conftest import TOY_EDGES, make_toy_graph
from modules.autograd import Tensor
from modules.errors import EvaluationError
from modules.evaluation import (
    DEGREE_BUCKETS,
    ModelScorer,
    across_head_variance,
    attention_heatmap_export,
    bucket_of,
    build_metric_report,
    build_queries,
    evaluate,
    linear_fit,
    metric_mrr,
    metric_ndcg,
    metric_recall_hr,
    rank_candidates,
    rank_stability,
    recommend,
    recommendation_candidates,
    similar_monitors,
    sparsity_gain,
    write_jsonl,
)
from modules.model import AttentionRecord, ModelConfig, init_params
from modules.monitor_graph import (
    DIMENSION,
    METRIC,
    METRIC_DIMENSION,
    MONITOR,
    MONITOR_DIMENSION,
    RELATIONS,
    build_graph,
    split_edges,
)
from modules.trainer import message_graphs


class TableScorer:
    """Scores every candidate with a fixed per-dimension value."""

    name = "table"

    def __init__(self, values=None, default=0.5):
        self.values = values or {}
        self.default = default
        self.calls = []

    def score(self, monitor, candidates):
        self.calls.append((monitor, list(candidates)))
        return np.array([self.values.get(int(c), self.default) for c in candidates])


class LinkScorer:
    """Oracle: 1 for every link present in the graph, 0 otherwise."""

    name = "oracle"

    def __init__(self, g, failing=()):
        self.g = g
        self.failing = set(failing)

    def score(self, monitor, candidates):
        if monitor in self.failing:
            raise EvaluationError(f"cannot score monitor {monitor}")
        return np.array([1.0 if self.g.has_edge(MONITOR_DIMENSION, monitor, int(c)) else 0.0 for c in candidates])


def _single_record(alpha, relation_id=0):
    alpha = np.asarray(alpha, dtype=float)
    index = np.arange(alpha.shape[0])
    return AttentionRecord(layer=0, receivers=index, senders=index,
                           relation_ids=np.full(alpha.shape[0], relation_id), alpha=Tensor(alpha))


# Metrics

def test_mrr_example():
    rankings = [[1, 2, 3, 4], [1, 2, 3, 4], [1, 2, 3, 4]]
    relevants = [[1], [2], [4]]
    assert metric_mrr(rankings, relevants) == pytest.approx(0.5833, abs=1e-4)


def test_ndcg_example():
    assert metric_ndcg([[5, 7, 9]], [[7]]) == pytest.approx(0.6309, abs=1e-4)
    assert metric_ndcg([[5, 7, 9]], [[5]]) == 1.0
    assert metric_ndcg([[5, 7, 9]], [[9]], k=2) == 0.0


def test_recall_hitrate_precision_example():
    ranking = [[10, 11, 12, 13, 14, 15, 16]]
    recall, hitrate, precision = metric_recall_hr(ranking, [[12, 16]], k=5)
    assert recall == 0.5
    assert hitrate == 1.0
    assert precision == pytest.approx(0.2)


def test_metric_errors():
    with pytest.raises(EvaluationError):
        metric_mrr([[1, 2]], [[3]])
    with pytest.raises(EvaluationError):
        metric_mrr([[1, 2]], [[]])
    with pytest.raises(EvaluationError):
        metric_mrr([], [])
    with pytest.raises(EvaluationError):
        metric_ndcg([[1]], [[1]], k=0)
    with pytest.raises(EvaluationError):
        metric_recall_hr([[1]], [[1], [1]], k=1)


def test_metrics_match_brute_force():
    rng = np.random.default_rng(0)
    rankings, relevants = [], []
    for _ in range(200):
        n = int(rng.integers(1, 11))
        ranking = rng.permutation(100)[:n].tolist()
        relevant = rng.choice(ranking, size=int(rng.integers(1, n + 1)), replace=False).tolist()
        rankings.append(ranking)
        relevants.append(relevant)

    reciprocal, ndcg, recall = [], [], []
    for ranking, relevant in zip(rankings, relevants):
        hits = [1 if item in relevant else 0 for item in ranking]
        reciprocal.append(1.0 / (hits.index(1) + 1))
        dcg = sum(h / np.log2(i + 2) for i, h in enumerate(hits[:5]))
        ideal = sum(1.0 / np.log2(i + 2) for i in range(min(len(relevant), 5)))
        ndcg.append(dcg / ideal)
        recall.append(sum(hits[:3]) / len(relevant))

    assert metric_mrr(rankings, relevants) == pytest.approx(np.mean(reciprocal), rel=1e-12)
    assert metric_ndcg(rankings, relevants, k=5) == pytest.approx(np.mean(ndcg), rel=1e-12)
    assert metric_recall_hr(rankings, relevants, k=3)[0] == pytest.approx(np.mean(recall), rel=1e-12)


def test_bucket_of():
    assert bucket_of(0) == "0-1"
    assert bucket_of(3) == "2-3"
    assert bucket_of(5) == "4-7"
    assert bucket_of(100) == "16+"
    with pytest.raises(EvaluationError):
        bucket_of(-1)


def test_metric_report_layout():
    report = build_metric_report([[1, 2], [3, 4]], [[1], [4]], monitors=[0, 1], degrees=[1, 9])
    assert report["n_queries"] == 2
    for key in ("hr@1", "precision@1", "recall@1", "hr@5", "mrr", "ndcg@5"):
        assert key in report
    assert report["mrr"] == 0.75
    assert len(report["buckets"]) == len(DEGREE_BUCKETS)
    by_label = {row["bucket"]: row for row in report["buckets"]}
    assert by_label["0-1"]["mrr"] == 1.0
    assert by_label["8-15"]["mrr"] == 0.5
    assert by_label["2-3"]["mrr"] is None


# Ranking

def test_rank_candidates_orders_by_score_then_id():
    g = make_toy_graph()
    scorer = TableScorer({0: 0.2, 2: 0.9, 3: 0.9, 4: 0.1})
    ranked = rank_candidates(scorer, g, 1, [4, 3, 0, 2])
    assert ranked.dimensions == [2, 3, 0, 4]
    assert ranked.items[0] == (2, 0.9)


def test_rank_candidates_ties_and_single_candidate():
    g = make_toy_graph()
    assert rank_candidates(TableScorer(), g, 0, [4, 1, 3]).dimensions == [1, 3, 4]
    single = rank_candidates(TableScorer({2: 0.3}), g, 0, [2])
    assert single.items == [(2, 0.3)]


def test_rank_candidates_is_permutation_invariant():
    g = make_toy_graph()
    scorer = TableScorer({0: 0.4, 1: 0.7, 2: 0.1, 3: 0.7, 4: 0.5})
    base = rank_candidates(scorer, g, 2, [0, 1, 2, 3, 4]).items
    rng = np.random.default_rng(1)
    for _ in range(5):
        assert rank_candidates(scorer, g, 2, rng.permutation(5).tolist()).items == base
    # Duplicates collapse before scoring
    assert rank_candidates(scorer, g, 2, [1, 1, 3]).dimensions == [1, 3]


def test_rank_candidates_errors():
    g = make_toy_graph()
    with pytest.raises(EvaluationError):
        rank_candidates(TableScorer(), g, 9, [0])
    with pytest.raises(EvaluationError):
        rank_candidates(TableScorer(), g, 0, [])
    with pytest.raises(EvaluationError):
        rank_candidates(TableScorer(), g, 0, [5])


def test_evidence_lists_similar_holders():
    g = make_toy_graph()
    assert similar_monitors(g, 1, 3) == [3]
    ranked = rank_candidates(TableScorer(), g, 0, [2], evidence_k=3)
    assert ranked.evidence == {2: [2]}
    data = ranked.to_dict(g)
    assert data["monitor_name"] == "monitor-0"
    assert data["recommendations"][0]["evidence_names"] == ["monitor-2"]


# Comparisons

def test_rank_stability_identical_and_swap():
    same = rank_stability([[1, 2, 3]], [[1, 2, 3]])
    assert same["deltas"] == [0, 0, 0]
    assert same["unchanged"] == 1.0

    swapped = rank_stability([[1, 2, 3]], [[2, 1, 3]])
    assert swapped["deltas"] == [1, -1, 0]
    assert swapped["histogram"] == {-1: 1, 0: 1, 1: 1}
    assert swapped["improved"] == pytest.approx(1 / 3)

    relevant_only = rank_stability([[1, 2, 3]], [[2, 1, 3]], relevants=[[2]])
    assert relevant_only["deltas"] == [-1]


def test_rank_stability_rejects_mismatched_queries():
    with pytest.raises(EvaluationError):
        rank_stability([[1, 2]], [[1, 2], [3, 4]])
    with pytest.raises(EvaluationError):
        rank_stability([[1, 2]], [[1, 3]])


def test_sparsity_gain():
    report = build_metric_report([[1, 2], [3, 4]], [[2], [3]], monitors=[0, 1], degrees=[0, 20])
    gains = sparsity_gain(report, report)
    assert gains["0-1"] == 0.0
    assert gains["16+"] == 0.0
    assert gains["4-7"] is None

    better = build_metric_report([[2, 1], [3, 4]], [[2], [3]], monitors=[0, 1], degrees=[0, 20])
    assert sparsity_gain(better, report)["0-1"] == pytest.approx(0.5)

    other = build_metric_report([[1, 2]], [[2]], monitors=[5], degrees=[0])
    with pytest.raises(EvaluationError):
        sparsity_gain(report, other)


# Attention maps

def test_across_head_variance():
    assert across_head_variance([_single_record([[0.4], [0.6]])]) == {RELATIONS[0]: 0.0}
    assert across_head_variance([_single_record([[0.4, 0.4], [0.6, 0.6]])]) == {RELATIONS[0]: 0.0}
    assert across_head_variance([_single_record([[1.0, 0.0], [0.0, 1.0]])])[RELATIONS[0]] == pytest.approx(0.25)


def test_heatmap_export_from_model_scorer(tmp_path):
    g = make_toy_graph()
    cfg = ModelConfig(layers=2, hidden=4, out=4, heads=2, d_emb=2, path_lengths=(2,), paths_per_node=2, fanout=None)
    scorer = ModelScorer(g, init_params(cfg, g.d_feat, g.total_nodes, seed=1), cfg, seed=0)

    scores = scorer.score(1, np.array([0, 2]))
    assert np.all((scores > 0) & (scores < 1))
    assert np.array_equal(scores, scorer.score(1, np.array([0, 2])))

    records, subgraph = scorer.attention(1, np.array([0, 2]))
    path = str(tmp_path / "maps" / "kd.csv")
    result = attention_heatmap_export(records, METRIC_DIMENSION, 2, path, subgraph)
    assert os.path.exists(path)
    assert result["shape"][0] <= 2
    assert result["variance"] >= 0.0

    matrix = pd.read_csv(path, index_col=0)
    # Messages run both ways along metric_has_dimension
    labels = list(matrix.index) + list(matrix.columns)
    assert {label.split(":")[0] for label in labels} <= {METRIC, DIMENSION}
    assert ((matrix.values >= 0) & (matrix.values <= 1 + 1e-12)).all()


def test_heatmap_export_needs_edges(tmp_path):
    with pytest.raises(EvaluationError):
        attention_heatmap_export([_single_record([[1.0]])], RELATIONS[1], 5, str(tmp_path / "x.csv"))


# Queries and evaluation runs

def test_build_queries_fixed(small_graph):
    split = split_edges(small_graph, seed=0)
    queries = build_queries(small_graph, split, "fixed")
    assert len(queries) == len(split.test)
    for query, (monitor, dim) in zip(queries, split.test):
        assert query.monitor == monitor
        assert query.relevant == [dim]
        assert dim in query.candidates
        assert query.candidate_set == "fixed:test:2"
    assert len(build_queries(small_graph, split, "fixed", which="validation")) == len(split.validation)


def test_build_queries_pool(small_graph):
    split = split_edges(small_graph, seed=0)
    queries = build_queries(small_graph, split, "pool", pool_size=10, seed=3)
    assert sorted(q.monitor for q in queries) == sorted(set(split.test[:, 0].tolist()))
    for query in queries:
        linked = set(small_graph.neighbors(MONITOR_DIMENSION, query.monitor).tolist())
        others = set(query.candidates.tolist()) - set(query.relevant)
        assert not others & linked
        assert len(others) <= 10
    again = build_queries(small_graph, split, "pool", pool_size=10, seed=3)
    assert all(np.array_equal(a.candidates, b.candidates) for a, b in zip(queries, again))
    with pytest.raises(EvaluationError):
        build_queries(small_graph, split, "everything")


def test_evaluate_with_oracle_scorer(small_graph):
    split = split_edges(small_graph, seed=0)
    queries = build_queries(small_graph, split, "fixed")
    run = evaluate(LinkScorer(small_graph), small_graph, queries, workers=2)
    assert run.report["mrr"] == 1.0
    assert run.report["scorer"] == "oracle"
    assert run.failures == []
    serial = evaluate(LinkScorer(small_graph), small_graph, queries, workers=1)
    assert serial.report["mrr"] == run.report["mrr"]



def test_untrained_model_ranks_near_chance(small_graph):
    split = split_edges(small_graph, seed=0)
    _, g_eval = message_graphs(small_graph, split)
    queries = build_queries(small_graph, split, "fixed") + build_queries(small_graph, split, "fixed", which="validation")
    # mean reciprocal rank of a uniformly random order; 0.611 for three candidates
    chance = np.mean([sum(1.0 / r for r in range(1, q.candidates.size + 1)) / q.candidates.size for q in queries])

    cfg = ModelConfig(layers=2, hidden=8, out=8, heads=2, d_emb=4, path_lengths=(2,), paths_per_node=2)
    mrrs = []
    for init_seed in range(6):
        scorer = ModelScorer(g_eval, init_params(cfg, g_eval.d_feat, g_eval.total_nodes, seed=init_seed), cfg, seed=0)
        mrrs.append(evaluate(scorer, g_eval, queries, workers=1).report["mrr"])
    assert abs(np.mean(mrrs) - chance) < 0.08

def test_evaluate_collects_failures(small_graph):
    split = split_edges(small_graph, seed=0)
    queries = build_queries(small_graph, split, "fixed")
    failing = int(queries[0].monitor)
    run = evaluate(LinkScorer(small_graph, failing=[failing]), small_graph, queries, workers=1)
    assert run.failures and all(f["monitor"] == failing for f in run.failures)
    assert all(q.monitor != failing for q in run.queries)
    with pytest.raises(EvaluationError):
        evaluate(LinkScorer(small_graph, failing={int(q.monitor) for q in queries}), small_graph, queries, workers=1)


# Recommendations

def _toy_with_isolated_monitor():
    return build_graph({MONITOR: 5, METRIC: 3, DIMENSION: 5}, TOY_EDGES)


def test_recommendation_candidates():
    g = _toy_with_isolated_monitor()
    assert recommendation_candidates(g, 0).tolist() == [2]
    assert recommendation_candidates(g, 1).tolist() == [0, 2]
    assert recommendation_candidates(g, 3).tolist() == [4]
    with pytest.raises(EvaluationError):
        recommendation_candidates(g, 4)


def test_recommend_top_k_and_failures(tmp_path):
    g = _toy_with_isolated_monitor()
    results = recommend(TableScorer({0: 0.3, 2: 0.8}), g, [1, 4, 9], k=1, evidence_k=2)
    assert results[0]["success"]
    ranked = results[0]["data"]
    assert ranked.dimensions == [2]
    assert ranked.candidate_set == "closure"
    assert ranked.evidence == {2: [2]}
    assert not results[1]["success"] and results[1]["monitor"] == 4
    assert not results[2]["success"]
    with pytest.raises(EvaluationError):
        recommend(TableScorer(), g, [0], k=0)

    path = write_jsonl([ranked.to_dict(g)], str(tmp_path / "out" / "recs.jsonl"))
    with open(path, "r", encoding="utf-8") as handle:
        assert len(handle.readlines()) == 1


# Scaling

def test_linear_fit():
    assert linear_fit([1000], [2.0]) == {"slope": "n/a", "intercept": "n/a", "r2": "n/a"}
    fit = linear_fit([1, 2, 3], [3, 5, 7])
    assert fit["slope"] == pytest.approx(2.0)
    assert fit["intercept"] == pytest.approx(1.0)
    assert fit["r2"] == pytest.approx(1.0)
