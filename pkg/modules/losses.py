import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from modules.autograd import (
    Tensor,
    add,
    gather_rows,
    log,
    mul,
    reshape,
    sigmoid,
    softmax_rows,
    square,
    sub,
    tensor_mean,
    tensor_sum,
)
from modules.errors import ShapeError
from modules.settings import ConfigMixin

# Configure logging
logging.basicConfig(level=logging.INFO,
                   format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

COMPONENTS = ("bce", "top1max", "align")


@dataclass
class LossConfig(ConfigMixin):
    lambda_al: float = 0.1
    use_top1: bool = True
    use_align: bool = True
    balance: bool = False
    ema_decay: float = 0.9
    eps: float = 1e-8
    bce_floor: float = 0.5

    def __post_init__(self):
        if self.lambda_al < 0:
            raise ValueError(f"lambda_al must be >= 0, got {self.lambda_al}")
        if not 0.0 <= self.ema_decay < 1.0:
            raise ValueError(f"ema_decay must be in [0, 1), got {self.ema_decay}")
        if self.eps <= 0:
            raise ValueError("eps must be positive")

    def active(self) -> Tuple[str, ...]:
        names = ["bce"]
        if self.use_top1:
            names.append("top1max")
        if self.use_align and self.lambda_al > 0:
            names.append("align")
        return tuple(names)


@dataclass
class LossBreakdown:
    bce: float
    top1max: float
    align: float
    weights: Dict[str, float]
    total: float

    def as_row(self) -> Dict[str, float]:
        return {
            "bce": self.bce,
            "top1max": self.top1max,
            "align": self.align,
            "w_bce": self.weights.get("bce", 0.0),
            "w_top1": self.weights.get("top1max", 0.0),
            "w_al": self.weights.get("align", 0.0),
            "total": self.total,
        }


@dataclass
class BalancerState:
    """EMA of each loss component's magnitude."""

    decay: float = 0.9
    eps: float = 1e-8
    bce_floor: float = 0.5
    ema: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, object]:
        return {"decay": self.decay, "eps": self.eps, "bce_floor": self.bce_floor, "ema": dict(self.ema)}

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> "BalancerState":
        return cls(
            decay=float(data["decay"]),
            eps=float(data["eps"]),
            bce_floor=float(data["bce_floor"]),
            ema={k: float(v) for k, v in dict(data["ema"]).items()},
        )


def loss_bce(y: np.ndarray, y_hat: Tensor) -> Tensor:
    """
    Mean binary cross-entropy of probabilities against {0, 1} labels.

    Raises:
        ShapeError: label and prediction counts differ
    """
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y_hat.size != y.size:
        raise ShapeError(f"loss_bce got {y.size} labels for {y_hat.size} predictions")
    if y.size == 0:
        raise ShapeError("loss_bce needs at least one prediction")
    p = reshape(y_hat, (y.size,))
    ll = add(mul(Tensor(y), log(p)), mul(Tensor(1.0 - y), log(sub(1.0, p))))
    return -tensor_mean(ll)


def loss_top1max(r_pos: Tensor, r_neg: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
    """
    TOP1-max ranking loss on raw scores.

    For each positive: s = softmax(r_neg); sum_j s_j * (sigmoid(r_j - r_pos) + sigmoid(r_j^2)),
    averaged over positives that have at least one negative.

    Args:
        r_pos: [B] positive logits
        r_neg: [B × N] negative logits
        mask: optional [B × N] valid negatives

    Raises:
        ShapeError: no negatives or mismatched shapes
    """
    if r_neg.ndim == 1:
        r_neg = reshape(r_neg, (1, r_neg.size))
    b = r_neg.shape[0]
    if r_neg.shape[1] == 0:
        raise ShapeError("loss_top1max needs at least one negative")
    if r_pos.size != b:
        raise ShapeError(f"loss_top1max got {r_pos.size} positives for {b} negative rows")
    mask = np.ones(r_neg.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    rows = mask.any(axis=1)
    if not rows.any():
        raise ShapeError("loss_top1max needs at least one negative")

    s = softmax_rows(r_neg, mask=mask)
    diff = sub(r_neg, reshape(r_pos, (b, 1)))
    terms = add(sigmoid(diff), sigmoid(square(r_neg)))
    per_positive = tensor_sum(mul(s, terms), axis=1)
    if rows.all():
        return tensor_mean(per_positive)
    return tensor_mean(gather_rows(per_positive, np.flatnonzero(rows)))


def loss_align(records: Sequence, lambda_al: float) -> Tensor:
    """
    Across-head attention alignment.

    Per layer, the [E × heads] attention matrix is compared against its mean
    over heads; the mean squared deviation (over heads and edges) is averaged
    over layers and scaled by ``lambda_al``. One head gives 0.

    Raises:
        ShapeError: a record's attention is not [E × heads]
    """
    terms: List[Tensor] = []
    for record in records:
        alpha = record.alpha
        if alpha.ndim != 2:
            raise ShapeError(f"Attention of layer {record.layer} must be [edges × heads], got {alpha.shape}")
        if alpha.shape[1] < 2 or alpha.shape[0] == 0:
            terms.append(Tensor(0.0))
            continue
        centre = tensor_mean(alpha, axis=1, keepdims=True)
        terms.append(tensor_mean(square(sub(alpha, centre))))
    if not terms:
        return Tensor(0.0)
    total = terms[0]
    for term in terms[1:]:
        total = add(total, term)
    return mul(total, lambda_al / len(terms))


def balance_weights(state: BalancerState, current: Dict[str, float], active: Sequence[str] = COMPONENTS) -> Dict[str, float]:
    """
    Update the EMAs with ``current`` and return inverse-magnitude weights.

    Weights are 1 / max(EMA, eps), normalised to sum to the number of active
    components; the BCE weight never drops below ``bce_floor``.
    """
    for name in active:
        value = float(current[name])
        if not np.isfinite(value) or value < 0:
            raise ValueError(f"Loss component {name} must be finite and >= 0, got {value}")
        previous = state.ema.get(name)
        ema = value if previous is None else state.decay * previous + (1.0 - state.decay) * value
        state.ema[name] = max(ema, state.eps)
    return balanced_weights(state, active)


def balanced_weights(state: BalancerState, active: Sequence[str] = COMPONENTS) -> Dict[str, float]:
    """Weights from the current EMAs without updating them."""
    weights = {name: 0.0 for name in COMPONENTS}
    if not active:
        return weights
    if any(name not in state.ema for name in active):
        weights.update({name: 1.0 for name in active})
        return weights
    inverse = {name: 1.0 / max(state.ema[name], state.eps) for name in active}
    total = sum(inverse.values())
    n = len(active)
    for name in active:
        weights[name] = n * inverse[name] / total
    if "bce" in active and n > 1 and weights["bce"] < state.bce_floor:
        rest = total - inverse["bce"]
        weights["bce"] = state.bce_floor
        for name in active:
            if name != "bce":
                weights[name] = (n - state.bce_floor) * inverse[name] / rest
    return weights


def loss_total(
    bce: Tensor,
    top1max: Optional[Tensor],
    align: Optional[Tensor],
    weights: Dict[str, float],
) -> Tuple[Tensor, LossBreakdown]:
    """
    Weighted sum of the loss components.

    Args:
        bce: BCE loss
        top1max: ranking loss, or None when disabled
        align: alignment loss (already scaled by lambda_al), or None
        weights: component weights

    Returns:
        (total Tensor, LossBreakdown)
    """
    parts = {"bce": bce, "top1max": top1max, "align": align}
    total = None
    for name in COMPONENTS:
        part = parts[name]
        w = float(weights.get(name, 0.0))
        if part is None or w == 0.0:
            continue
        term = part if w == 1.0 else mul(part, w)
        total = term if total is None else add(total, term)
    if total is None:
        total = mul(bce, 0.0)

    breakdown = LossBreakdown(
        bce=bce.item(),
        top1max=top1max.item() if top1max is not None else 0.0,
        align=align.item() if align is not None else 0.0,
        weights={name: float(weights.get(name, 0.0)) for name in COMPONENTS},
        total=total.item(),
    )
    return total, breakdown


def component_weights(cfg: LossConfig, state: Optional[BalancerState], values: Dict[str, float], update: bool = True) -> Dict[str, float]:
    """Fixed unit weights, or balanced ones when ``cfg.balance`` is on."""
    active = cfg.active()
    if not cfg.balance or state is None:
        return {name: (1.0 if name in active else 0.0) for name in COMPONENTS}
    if update:
        return balance_weights(state, values, active)
    return balanced_weights(state, active)
