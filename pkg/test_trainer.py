"""
Tests for the learning-rate schedule, early stopping, batching and the training loop,
including resume equivalence through checkpoints.
"""

import logging
import os
import sys

import numpy as np
import pytest

# Configure logging
logging.basicConfig(level=logging.INFO,
                   format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from modules.checkpoint import load_checkpoint
from modules.errors import TrainingDivergedError
from modules.losses import LossConfig
from modules.model import ModelConfig
from modules.monitor_graph import (
    DIMENSION,
    METRIC,
    METRIC_DIMENSION,
    MONITOR,
    MONITOR_DIMENSION,
    MONITOR_METRIC,
    build_graph,
    init_node_features,
    split_edges,
)
from modules.trainer import (
    LOG_COLUMNS,
    TrainConfig,
    TrainState,
    early_stop_check,
    fixed_negative_batch,
    history_frame,
    lr_schedule_step,
    message_graphs,
    pipelined,
    run_training,
    supervision_batches,
    train,
)

TINY_MODEL = ModelConfig(layers=2, hidden=8, out=8, heads=2, d_emb=4, path_lengths=(2,), paths_per_node=2, fanout=5)


def _tiny_train(**overrides):
    values = dict(max_epochs=2, batch_size=32, max_batches_per_epoch=2, prefetch=1, seed=0)
    values.update(overrides)
    return TrainConfig(**values)


def _run_trace(losses, patience=5, stop_patience=10, lr=0.001):
    state = TrainState(lr=lr)
    lrs, stopped_at = [], None
    for epoch, value in enumerate(losses):
        state.epoch = epoch
        lrs.append(lr_schedule_step(state, value, patience))
        if early_stop_check(state, stop_patience) == "stop":
            stopped_at = epoch
            break
    return state, lrs, stopped_at


def test_lr_halves_after_five_stagnant_epochs():
    state, lrs, _ = _run_trace([1.0] * 6)
    assert lrs[:5] == [0.001] * 5
    assert lrs[5] == 0.0005
    assert state.lr_stale == 0


def test_improvement_resets_counter():
    state, lrs, _ = _run_trace([1.0, 1.0, 1.0, 1.0, 0.9, 0.9])
    assert lrs[-1] == 0.001
    assert state.best_epoch == 4
    assert state.lr_stale == 1


def test_equal_loss_is_not_improvement():
    state = TrainState()
    state.epoch = 0
    lr_schedule_step(state, 0.5)
    state.epoch = 1
    lr_schedule_step(state, 0.5)
    assert not state.improved
    assert state.best_epoch == 0


def test_constant_loss_stops_at_epoch_ten():
    state, lrs, stopped_at = _run_trace([1.0] * 40)
    assert stopped_at == 10
    # The scheduler runs before the stop check: the second halving already happened
    assert state.lr == 0.00025
    assert all(b <= a for a, b in zip(lrs, lrs[1:]))


def test_monotone_improvement_never_stops():
    _, _, stopped_at = _run_trace([1.0 / (i + 1) for i in range(50)])
    assert stopped_at is None


def test_late_improvement_resets_stop_counter():
    trace = [1.0] + [1.0] * 8 + [0.5] + [0.5] * 9
    _, _, stopped_at = _run_trace(trace)
    assert stopped_at is None


def test_non_finite_validation_loss_raises():
    with pytest.raises(TrainingDivergedError):
        lr_schedule_step(TrainState(), float("nan"))


def test_early_stop_needs_an_evaluation():
    with pytest.raises(ValueError):
        early_stop_check(TrainState())


def test_supervision_batches_cover_edges_once():
    edges = np.arange(50).reshape(25, 2)
    batches = supervision_batches(edges, 8, seed=1, epoch=0)
    assert [len(b) for b in batches] == [8, 8, 8, 1]
    assert sorted(np.concatenate(batches)[:, 0].tolist()) == edges[:, 0].tolist()
    again = supervision_batches(edges, 8, seed=1, epoch=0)
    assert all(np.array_equal(a, b) for a, b in zip(batches, again))
    assert len(supervision_batches(edges, 8, seed=1, epoch=0, limit=2)) == 2


def test_fixed_negative_batch_layout():
    pairs = np.array([[0, 1], [2, 3]])
    batch = fixed_negative_batch(pairs, np.array([[5, 6], [7, 8]]))
    assert batch.pairs.tolist() == [[0, 5], [0, 6], [2, 7], [2, 8]]
    assert batch.positive_index.tolist() == [0, 0, 1, 1]


def test_pipelined_preserves_order():
    assert list(pipelined(lambda i: i * i, 7, depth=2, workers=3)) == [i * i for i in range(7)]
    assert list(pipelined(lambda i: i, 3, depth=0, workers=1)) == [0, 1, 2]


def test_message_graphs(small_graph):
    split = split_edges(small_graph, seed=0)
    g_train, g_eval = message_graphs(small_graph, split)
    assert g_train.num_edges(MONITOR_DIMENSION) == len(split.train_message)
    assert g_eval.num_edges(MONITOR_DIMENSION) == len(split.train_message) + len(split.train_supervision)
    assert not g_eval.contains_edges(MONITOR_DIMENSION, split.test).any()


def test_training_history_and_determinism(small_graph):
    split = split_edges(small_graph, seed=0)
    best_a, history_a = train(small_graph, split, TINY_MODEL, _tiny_train())
    best_b, history_b = train(small_graph, split, TINY_MODEL, _tiny_train())
    assert len(history_a) == 2
    assert history_a == history_b
    assert all(np.array_equal(best_a[k].data, best_b[k].data) for k in best_a)
    assert list(history_frame(history_a).columns) == LOG_COLUMNS
    assert [row["epoch"] for row in history_a] == [0, 1]


def test_zero_learning_rate_keeps_parameters(small_graph):
    split = split_edges(small_graph, seed=0)
    result = run_training(small_graph, split, TINY_MODEL, _tiny_train(lr=0.0, weight_decay=0.0))
    initial = run_training(small_graph, split, TINY_MODEL, _tiny_train(max_epochs=0))
    assert all(np.array_equal(result.params[k].data, initial.params[k].data) for k in initial.params)



def test_training_loss_descends_over_first_epochs():
    # each monitor skips exactly one dimension, so every negative is fixed
    md = np.array([[m, d] for m in range(4) for d in range(5) if d != m])
    g = build_graph(
        {MONITOR: 4, METRIC: 1, DIMENSION: 5},
        {
            METRIC_DIMENSION: np.array([[0, d] for d in range(5)]),
            MONITOR_METRIC: np.array([[m, 0] for m in range(4)]),
            MONITOR_DIMENSION: md,
        },
        seed=0,
    )
    g = init_node_features(g, 3, seed=0)
    split = split_edges(g, seed=0)
    model_cfg = ModelConfig(layers=2, hidden=8, out=8, heads=2, d_emb=4, path_lengths=(2,), use_rwa=False, fanout=None)
    loss_cfg = LossConfig(use_top1=False, use_align=False)
    _, history = train(g, split, model_cfg, _tiny_train(max_epochs=5, lr=0.005, weight_decay=0.0), loss_cfg)
    totals = [row["total"] for row in history]
    assert len(totals) == 5
    assert all(later < earlier for earlier, later in zip(totals, totals[1:]))

def test_checkpoint_and_log_written(small_graph, tmp_path):
    split = split_edges(small_graph, seed=0)
    checkpoint_path = str(tmp_path / "checkpoint.json")
    log_path = str(tmp_path / "train_log.csv")
    run_training(small_graph, split, TINY_MODEL, _tiny_train(), checkpoint_path=checkpoint_path, log_path=log_path)
    ckpt = load_checkpoint(checkpoint_path)
    assert ckpt.train_state["epoch"] == 1
    batches_per_epoch = min(2, -(-len(split.train_supervision) // 32))
    assert ckpt.adam.step == 2 * batches_per_epoch
    assert os.path.exists(log_path)


@pytest.mark.parametrize("balance", [False, True])
def test_resume_equivalence(small_graph, tmp_path, balance):
    split = split_edges(small_graph, seed=0)
    loss_cfg = LossConfig(balance=balance)
    straight = run_training(small_graph, split, TINY_MODEL, _tiny_train(max_epochs=3), loss_cfg)

    checkpoint_path = str(tmp_path / "checkpoint.json")
    run_training(small_graph, split, TINY_MODEL, _tiny_train(max_epochs=1), loss_cfg, checkpoint_path=checkpoint_path)
    resumed = run_training(
        small_graph, split, TINY_MODEL, _tiny_train(max_epochs=3), loss_cfg,
        resume=load_checkpoint(checkpoint_path),
    )

    assert resumed.history == straight.history
    for name in straight.params:
        assert np.array_equal(resumed.params[name].data, straight.params[name].data)
        assert np.array_equal(resumed.best_params[name].data, straight.best_params[name].data)
    assert resumed.adam.step == straight.adam.step
    if balance:
        assert resumed.balancer.ema == straight.balancer.ema
