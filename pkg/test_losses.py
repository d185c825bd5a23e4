"""
Tests for the BCE, TOP1-max and attention-alignment losses and the loss balancer.
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

from modules.autograd import Tape, Tensor, segment_softmax
from modules.errors import ShapeError
from modules.losses import (
    BalancerState,
    LossConfig,
    balance_weights,
    component_weights,
    loss_align,
    loss_bce,
    loss_top1max,
    loss_total,
)
from modules.model import AttentionRecord


def _record(alpha, layer=0):
    alpha = alpha if isinstance(alpha, Tensor) else Tensor(np.asarray(alpha, dtype=float))
    e = alpha.shape[0]
    index = np.arange(e)
    return AttentionRecord(layer=layer, receivers=index, senders=index, relation_ids=np.zeros(e, dtype=np.int64), alpha=alpha)


def test_bce_values():
    assert loss_bce([1], Tensor([1.0])).item() == 0.0
    assert np.isclose(loss_bce([1], Tensor([0.5])).item(), np.log(2.0))
    assert np.isclose(loss_bce([1, 0], Tensor([0.9, 0.2])).item(), -(np.log(0.9) + np.log(0.8)) / 2)
    assert np.isclose(loss_bce([1, 0], Tensor([0.9, 0.2])).item(), 0.1643, atol=1e-4)


def test_bce_is_non_negative_and_checks_shapes():
    rng = np.random.default_rng(0)
    for _ in range(20):
        y = rng.integers(0, 2, size=8)
        assert loss_bce(y, Tensor(rng.uniform(0.01, 0.99, size=8))).item() >= 0
    with pytest.raises(ShapeError):
        loss_bce([1, 0, 1], Tensor([0.5, 0.5]))


def test_bce_clamps_certain_mistakes():
    value = loss_bce([1], Tensor([0.0])).item()
    assert np.isfinite(value)
    assert np.isclose(value, -np.log(1e-12))


def test_top1max_values():
    assert np.isclose(loss_top1max(Tensor([0.0]), Tensor([[0.0]])).item(), 1.0)
    assert np.isclose(loss_top1max(Tensor([0.0]), Tensor([[0.0, 0.0]])).item(), 1.0)
    assert np.isclose(loss_top1max(Tensor([1.0]), Tensor([[-1.0, 0.5]])).item(), 0.9234, atol=1e-4)


def test_top1max_permutation_invariant():
    rng = np.random.default_rng(1)
    pos = Tensor(rng.normal(size=4))
    neg = rng.normal(size=(4, 5))
    base = loss_top1max(pos, Tensor(neg)).item()
    shuffled = loss_top1max(pos, Tensor(neg[:, rng.permutation(5)])).item()
    assert np.isclose(base, shuffled, rtol=1e-12)


def test_top1max_mask_and_errors():
    pos = Tensor([0.0, 1.0])
    neg = Tensor([[0.0, 9.0], [-1.0, 0.5]])
    mask = np.array([[True, False], [True, True]])
    masked = loss_top1max(pos, neg, mask).item()
    expected = (1.0 + loss_top1max(Tensor([1.0]), Tensor([[-1.0, 0.5]])).item()) / 2
    assert np.isclose(masked, expected)
    with pytest.raises(ShapeError):
        loss_top1max(Tensor([0.0]), Tensor(np.zeros((1, 0))))
    with pytest.raises(ShapeError):
        loss_top1max(Tensor([0.0, 1.0, 2.0]), neg)


def test_align_values():
    assert loss_align([_record([[1.0, 0.0], [0.0, 1.0]])], 1.0).item() == pytest.approx(0.25)
    assert loss_align([_record([[0.3, 0.3], [0.7, 0.7]])], 1.0).item() == 0.0
    assert loss_align([_record([[0.3], [0.7]])], 1.0).item() == 0.0


def test_align_linear_in_lambda_and_edge_order():
    rng = np.random.default_rng(2)
    alpha = rng.uniform(size=(6, 3))
    records = [_record(alpha), _record(rng.uniform(size=(4, 3)), layer=1)]
    one = loss_align(records, 1.0).item()
    assert one > 0
    assert np.isclose(loss_align(records, 2.0).item(), 2.0 * one)
    permuted = [_record(alpha[rng.permutation(6)]), records[1]]
    assert np.isclose(loss_align(permuted, 1.0).item(), one)


def test_align_descent_reduces_head_variance():
    rng = np.random.default_rng(3)
    segments = np.array([0, 0, 0, 1, 1, 2, 2, 2, 2])
    scores = Tensor(rng.normal(size=(9, 3)), requires_grad=True)
    values = []
    for _ in range(25):
        scores.grad = None
        with Tape() as tape:
            alpha = segment_softmax(scores, segments, 3)
            loss = loss_align([_record(alpha)], 1.0)
            tape.backward(loss)
        values.append(loss.item())
        scores.data -= 0.5 * scores.grad
    assert all(b <= a + 1e-15 for a, b in zip(values, values[1:]))
    assert values[-1] < values[0]


def test_balance_weights_properties():
    state = BalancerState()
    weights = balance_weights(state, {"bce": 0.4, "top1max": 0.4, "align": 0.4})
    assert weights == pytest.approx({"bce": 1.0, "top1max": 1.0, "align": 1.0})

    state = BalancerState()
    weights = balance_weights(state, {"bce": 1.0, "top1max": 2.0, "align": 1.0})
    assert weights["top1max"] < weights["bce"]
    assert weights["top1max"] < weights["align"]

    rng = np.random.default_rng(4)
    state = BalancerState()
    for _ in range(1000):
        current = {name: float(v) for name, v in zip(("bce", "top1max", "align"), rng.exponential(size=3))}
        weights = balance_weights(state, current)
        assert abs(sum(weights.values()) - 3.0) < 1e-9
        assert weights["bce"] >= 0.5
        assert all(ema > 0 for ema in state.ema.values())


def test_balance_floors_bce_weight():
    state = BalancerState()
    weights = balance_weights(state, {"bce": 1.0, "top1max": 0.01}, active=("bce", "top1max"))
    assert weights["bce"] == 0.5
    assert weights["top1max"] == pytest.approx(1.5)
    assert weights["align"] == 0.0


def test_balance_rejects_bad_values():
    with pytest.raises(ValueError):
        balance_weights(BalancerState(), {"bce": float("nan"), "top1max": 1.0, "align": 1.0})


def test_loss_total():
    total, breakdown = loss_total(Tensor(0.5), Tensor(1.0), Tensor(0.25), {"bce": 1.0, "top1max": 1.0, "align": 1.0})
    assert total.item() == pytest.approx(1.75)
    assert breakdown.as_row()["total"] == pytest.approx(1.75)

    total, breakdown = loss_total(Tensor(0.5), Tensor(1.0), Tensor(0.25), {"bce": 1.0, "top1max": 0.0, "align": 0.0})
    assert total.item() == 0.5
    assert breakdown.weights == {"bce": 1.0, "top1max": 0.0, "align": 0.0}


def test_component_weights_follow_config():
    cfg = LossConfig(use_top1=False, use_align=True, lambda_al=0.0)
    assert cfg.active() == ("bce",)
    assert component_weights(cfg, None, {}) == {"bce": 1.0, "top1max": 0.0, "align": 0.0}

    balanced = LossConfig(balance=True)
    state = BalancerState()
    weights = component_weights(balanced, state, {"bce": 0.5, "top1max": 0.5, "align": 0.5})
    assert weights == pytest.approx({"bce": 1.0, "top1max": 1.0, "align": 1.0})
    with pytest.raises(ValueError):
        LossConfig(lambda_al=-1.0)
