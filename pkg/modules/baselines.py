import logging
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from modules.autograd import AdamState, Tape, Tensor, adam_step, matmul, relu, sigmoid, zero_grads
from modules.errors import ShapeError
from modules.losses import loss_bce
from modules.model import glorot, pair_logits
from modules.monitor_graph import DIMENSION, MONITOR, MONITOR_DIMENSION, EdgeSplit, MonitorEntityGraph
from modules.random_streams import make_rng
from modules.sampling import sample_negatives
from modules.settings import ConfigMixin

# Configure logging
logging.basicConfig(level=logging.INFO,
                   format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

BASELINES = ("cf", "mlp")


@dataclass
class BaselineConfig(ConfigMixin):
    neighbours: int = 50
    hidden: int = 64
    out: int = 32
    epochs: int = 20
    batch_size: int = 256
    lr: float = 0.005
    neg_ratio: float = 2.0

    def __post_init__(self):
        if self.neighbours < 1:
            raise ValueError(f"neighbours must be >= 1, got {self.neighbours}")
        if self.hidden < 1 or self.out < 1 or self.epochs < 0 or self.batch_size < 1:
            raise ValueError("hidden, out and batch_size must be >= 1 and epochs >= 0")


class CollaborativeScorer:
    """
    User-based collaborative filtering over known monitor-dimension links.

    A dimension's score is the summed cosine similarity of the ``neighbours``
    most similar monitors that use it.
    """

    name = "cf"

    def __init__(self, g: MonitorEntityGraph, neighbours: int = 50):
        self.g = g
        self.neighbours = neighbours
        self.degrees = g.degree(MONITOR_DIMENSION, "src").astype(np.float64)

    def similarities(self, monitor: int) -> Tuple[np.ndarray, np.ndarray]:
        """(neighbour monitor ids, cosine similarities), strongest first."""
        dims = self.g.neighbors(MONITOR_DIMENSION, monitor)
        if dims.size == 0:
            return np.zeros(0, dtype=np.int64), np.zeros(0)
        holders = np.concatenate([self.g.neighbors(MONITOR_DIMENSION, int(d), reverse=True) for d in dims])
        overlap = np.bincount(holders, minlength=self.g.counts[MONITOR]).astype(np.float64)
        overlap[monitor] = 0.0
        others = np.flatnonzero(overlap)
        sims = overlap[others] / np.sqrt(self.degrees[monitor] * self.degrees[others])
        order = np.lexsort((others, -sims))[: self.neighbours]
        return others[order], sims[order]

    def score(self, monitor: int, candidates: np.ndarray) -> np.ndarray:
        candidates = np.asarray(candidates, dtype=np.int64)
        neighbours, sims = self.similarities(int(monitor))
        scores = np.zeros(candidates.size)
        for n, s in zip(neighbours, sims):
            scores += s * np.isin(candidates, self.g.neighbors(MONITOR_DIMENSION, int(n)))
        return scores


def init_two_tower(d_feat: int, cfg: BaselineConfig, seed: int) -> Dict[str, Tensor]:
    if d_feat < 1:
        raise ShapeError("The feature-only baseline needs node features")
    shapes = {}
    for tower in ("monitor", "dimension"):
        shapes[f"{tower}.W1"] = (d_feat, cfg.hidden)
        shapes[f"{tower}.W2"] = (cfg.hidden, cfg.out)
    return {
        name: Tensor(glorot(shape, make_rng(seed, "mlp", name)), requires_grad=True, name=name)
        for name, shape in shapes.items()
    }


def tower(x: Tensor, params: Dict[str, Tensor], name: str) -> Tensor:
    return matmul(relu(matmul(x, params[f"{name}.W1"])), params[f"{name}.W2"])


def two_tower_logits(params: Dict[str, Tensor], monitor_feats: np.ndarray, dim_feats: np.ndarray, pairs: np.ndarray) -> Tensor:
    left = tower(Tensor(monitor_feats[pairs[:, 0]]), params, "monitor")
    right = tower(Tensor(dim_feats[pairs[:, 1]]), params, "dimension")
    return pair_logits(left, right)


def train_two_tower(
    g: MonitorEntityGraph,
    split: EdgeSplit,
    cfg: BaselineConfig,
    seed: int = 0,
) -> Tuple[Dict[str, Tensor], List[float]]:
    """
    Fit the feature-only two-tower scorer with BCE on every training edge.

    Returns:
        (parameters, mean loss per epoch)
    """
    if g.features is None:
        raise ShapeError("The feature-only baseline needs node features")
    params = init_two_tower(g.d_feat, cfg, seed)
    adam = AdamState(lr=cfg.lr)
    edges = np.concatenate([split.train_message, split.train_supervision], axis=0)
    monitor_feats, dim_feats = g.features[MONITOR], g.features[DIMENSION]
    history = []
    for epoch in range(cfg.epochs):
        order = make_rng(seed, "mlp-epoch", epoch).permutation(len(edges))
        losses = []
        for b, start in enumerate(range(0, len(edges), cfg.batch_size)):
            positives = edges[order[start:start + cfg.batch_size]]
            negatives = sample_negatives(g, positives, cfg.neg_ratio, "dynamic", seed, stream=("mlp", epoch, b))
            pairs = np.concatenate([positives, negatives.pairs], axis=0)
            labels = np.concatenate([np.ones(len(positives)), np.zeros(len(negatives.pairs))])
            zero_grads(params)
            with Tape() as tape:
                loss = loss_bce(labels, sigmoid(two_tower_logits(params, monitor_feats, dim_feats, pairs)))
                tape.backward(loss)
            adam_step(params, None, adam)
            losses.append(loss.item())
        history.append(float(np.mean(losses)) if losses else 0.0)
        logger.info(f"Two-tower epoch {epoch}: loss {history[-1]:.5f}")
    return params, history


class TwoTowerScorer:
    """Feature-only scorer: sigmoid(tower_m(x_m) . tower_d(x_d))."""

    name = "mlp"

    def __init__(self, g: MonitorEntityGraph, params: Dict[str, Tensor]):
        self.params = params
        self.monitor_feats = g.features[MONITOR]
        self.dim_feats = g.features[DIMENSION]

    def score(self, monitor: int, candidates: np.ndarray) -> np.ndarray:
        candidates = np.asarray(candidates, dtype=np.int64)
        pairs = np.stack([np.full(candidates.size, monitor, dtype=np.int64), candidates], axis=1)
        return sigmoid(two_tower_logits(self.params, self.monitor_feats, self.dim_feats, pairs)).data.copy()
