import concurrent.futures
import logging
import math
import sys
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from modules.autograd import AdamState, Tape, Tensor, adam_step, concat, gather_rows, sigmoid, zero_grads
from modules.checkpoint import Checkpoint, save_checkpoint
from modules.errors import NumericError, TrainingDivergedError
from modules.losses import (
    BalancerState,
    LossBreakdown,
    LossConfig,
    component_weights,
    loss_align,
    loss_bce,
    loss_top1max,
    loss_total,
)
from modules.model import (
    ModelConfig,
    PreparedBatch,
    batch_logits,
    copy_params,
    init_params,
    prepare_batch,
)
from modules.monitor_graph import TARGET_RELATION, EdgeSplit, MonitorEntityGraph
from modules.random_streams import make_rng
from modules.sampling import NegativeBatch, sample_negatives
from modules.settings import ConfigMixin, worker_threads

# Configure logging
logging.basicConfig(level=logging.INFO,
                   format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

LOG_COLUMNS = ["epoch", "bce", "top1max", "align", "w_bce", "w_top1", "w_al", "total", "val_total", "lr"]


@dataclass
class TrainConfig(ConfigMixin):
    max_epochs: int = 100
    batch_size: int = 128
    lr: float = 0.001
    weight_decay: float = 1e-5
    scheduler_patience: int = 5
    scheduler_factor: float = 0.5
    early_stop_patience: int = 10
    neg_ratio: float = 2.0
    seed: int = 0
    freeze_paths: bool = False
    max_batches_per_epoch: Optional[int] = None
    prefetch: int = 2

    def __post_init__(self):
        if self.scheduler_patience < 1 or self.early_stop_patience < 1:
            raise ValueError("patience values must be >= 1")
        if not 0.0 < self.scheduler_factor < 1.0:
            raise ValueError(f"scheduler_factor must be in (0, 1), got {self.scheduler_factor}")
        if self.batch_size < 1 or self.max_epochs < 0:
            raise ValueError("batch_size must be >= 1 and max_epochs >= 0")
        if self.lr < 0 or self.weight_decay < 0:
            raise ValueError("lr and weight_decay must be >= 0")
        if self.neg_ratio <= 0:
            raise ValueError(f"neg_ratio must be positive, got {self.neg_ratio}")

    @classmethod
    def desk(cls, **overrides) -> "TrainConfig":
        return cls(max_epochs=30).replace(**overrides)

    @classmethod
    def production(cls, **overrides) -> "TrainConfig":
        return cls().replace(**overrides)


@dataclass
class TrainState:
    """
    Progress of a run. ``epoch`` is the last completed epoch (-1 before the first).

    The scheduler and early stopping keep independent stagnation counters.
    """

    epoch: int = -1
    lr: float = 0.001
    best_val_loss: float = math.inf
    best_epoch: int = -1
    lr_stale: int = 0
    stop_stale: int = 0
    evaluations: int = 0
    improved: bool = False
    stopped: bool = False
    history: List[Dict[str, float]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "epoch": self.epoch,
            "lr": self.lr,
            "best_val_loss": self.best_val_loss,
            "best_epoch": self.best_epoch,
            "lr_stale": self.lr_stale,
            "stop_stale": self.stop_stale,
            "evaluations": self.evaluations,
            "improved": self.improved,
            "stopped": self.stopped,
            "history": [dict(row) for row in self.history],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TrainState":
        state = cls()
        for key, value in data.items():
            if hasattr(state, key):
                setattr(state, key, value)
        state.history = [dict(row) for row in data.get("history", [])]
        return state


def lr_schedule_step(state: TrainState, val_loss: float, patience: int = 5, factor: float = 0.5) -> float:
    """
    Record a validation loss and halve the learning rate after ``patience`` stagnant epochs.

    Improvement means strictly lower than the best so far.

    Returns:
        float: the learning rate to use next
    """
    if not np.isfinite(val_loss):
        raise TrainingDivergedError(f"Validation loss is not finite ({val_loss})")
    state.evaluations += 1
    if val_loss < state.best_val_loss:
        state.best_val_loss = float(val_loss)
        state.best_epoch = state.epoch
        state.lr_stale = 0
        state.stop_stale = 0
        state.improved = True
        return state.lr

    state.improved = False
    state.lr_stale += 1
    state.stop_stale += 1
    if state.lr_stale >= patience:
        state.lr = state.lr * factor
        state.lr_stale = 0
        logger.info(f"No improvement for {patience} epochs; learning rate -> {state.lr:g}")
    return state.lr


def early_stop_check(state: TrainState, patience: int = 10) -> str:
    """Return "stop" once ``patience`` epochs passed without improvement, else "continue"."""
    if state.evaluations < 1:
        raise ValueError("early_stop_check needs at least one recorded validation loss")
    if state.stop_stale >= patience:
        state.stopped = True
        return "stop"
    return "continue"


# Batches

def supervision_batches(edges: np.ndarray, batch_size: int, seed: int, epoch: int, limit: Optional[int] = None) -> List[np.ndarray]:
    order = make_rng(seed, "epoch", epoch).permutation(len(edges))
    batches = [edges[order[i:i + batch_size]] for i in range(0, len(edges), batch_size)]
    return batches[:limit] if limit is not None else batches


def fixed_negative_batch(pairs: np.ndarray, negatives: np.ndarray) -> NegativeBatch:
    """Wrap a split's fixed negatives ([B × r] dimension ids) as a NegativeBatch."""
    per = negatives.shape[1]
    positive_index = np.repeat(np.arange(len(pairs)), per)
    corrupted = np.stack([pairs[positive_index, 0], negatives.reshape(-1)], axis=1)
    return NegativeBatch(pairs=corrupted, positive_index=positive_index, ratio=float(per))


def pipelined(prepare: Callable[[int], PreparedBatch], count: int, depth: int, workers: int):
    """Yield prepare(0..count-1) in order while up to ``depth`` batches are prepared ahead."""
    if workers <= 1 or depth < 1:
        for i in range(count):
            yield prepare(i)
        return
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as executor:
        pending = deque()
        submitted = 0
        while submitted < min(count, depth + 1):
            pending.append(executor.submit(prepare, submitted))
            submitted += 1
        while pending:
            future = pending.popleft()
            batch = future.result()
            if submitted < count:
                pending.append(executor.submit(prepare, submitted))
                submitted += 1
            yield batch


def batch_objective(
    batch: PreparedBatch,
    params: Dict[str, Tensor],
    model_cfg: ModelConfig,
    loss_cfg: LossConfig,
    features: np.ndarray,
    balancer: Optional[BalancerState],
    update_balancer: bool,
) -> Tuple[Tensor, LossBreakdown]:
    """Forward pass and composite loss for one prepared batch."""
    pos, neg, records = batch_logits(batch, params, model_cfg, features)
    n_pos, n_neg = pos.size, neg.size
    labels = np.concatenate([np.ones(n_pos), np.zeros(n_neg)])
    probs = sigmoid(concat([pos, neg], axis=0)) if n_neg else sigmoid(pos)
    bce = loss_bce(labels, probs)

    top1 = None
    if loss_cfg.use_top1 and n_neg:
        index, mask = batch.negatives.grouped(n_pos)
        top1 = loss_top1max(pos, gather_rows(neg, index), mask)
    align = None
    if loss_cfg.use_align and loss_cfg.lambda_al > 0:
        align = loss_align(records, loss_cfg.lambda_al)

    values = {
        "bce": bce.item(),
        "top1max": top1.item() if top1 is not None else 0.0,
        "align": align.item() if align is not None else 0.0,
    }
    weights = component_weights(loss_cfg, balancer, values, update=update_balancer)
    return loss_total(bce, top1, align, weights)


def validation_loss(
    g_eval: MonitorEntityGraph,
    positives: np.ndarray,
    negatives: np.ndarray,
    params: Dict[str, Tensor],
    model_cfg: ModelConfig,
    loss_cfg: LossConfig,
    features: np.ndarray,
    balancer: Optional[BalancerState],
    batch_size: int,
    seed: int,
) -> float:
    """Training objective on fixed negatives with the current weights (no balancer update)."""
    total, count = 0.0, 0
    for start in range(0, len(positives), batch_size):
        pairs = positives[start:start + batch_size]
        fixed = fixed_negative_batch(pairs, negatives[start:start + batch_size])
        batch = prepare_batch(g_eval, pairs, model_cfg, seed, stream=("val", start), negatives=fixed, path_stream=("val",))
        loss, _ = batch_objective(batch, params, model_cfg, loss_cfg, features, balancer, update_balancer=False)
        total += loss.item() * len(pairs)
        count += len(pairs)
    return total / max(count, 1)


def message_graphs(g: MonitorEntityGraph, split: EdgeSplit) -> Tuple[MonitorEntityGraph, MonitorEntityGraph]:
    """(training message graph, evaluation message graph with every training edge)."""
    g_train = g.restrict(TARGET_RELATION, split.train_message)
    g_eval = g.restrict(TARGET_RELATION, np.concatenate([split.train_message, split.train_supervision], axis=0))
    return g_train, g_eval


@dataclass
class TrainResult:
    params: Dict[str, Tensor]
    best_params: Dict[str, Tensor]
    state: TrainState
    adam: AdamState
    balancer: Optional[BalancerState]

    @property
    def history(self) -> List[Dict[str, float]]:
        return self.state.history


def history_frame(history: List[Dict[str, float]]) -> pd.DataFrame:
    return pd.DataFrame(history, columns=LOG_COLUMNS)


def train(
    g: MonitorEntityGraph,
    split: EdgeSplit,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    loss_cfg: Optional[LossConfig] = None,
    checkpoint_path: Optional[str] = None,
    log_path: Optional[str] = None,
    resume: Optional[Checkpoint] = None,
    checkpoint_meta: Optional[Dict[str, Any]] = None,
) -> Tuple[Dict[str, Tensor], List[Dict[str, float]]]:
    """
    Run the optimisation protocol.

    Args:
        g: full graph with features
        split: edge split of the target relation
        model_cfg, train_cfg, loss_cfg: configurations
        checkpoint_path: manifest path rewritten after every epoch
        log_path: per-epoch CSV log
        resume: checkpoint to continue from
        checkpoint_meta: extra fields (configs, variant, graph meta) stored with checkpoints

    Returns:
        (best parameters, per-epoch history rows)

    Raises:
        TrainingDivergedError: a loss became NaN or Inf
    """
    result = run_training(g, split, model_cfg, train_cfg, loss_cfg, checkpoint_path, log_path, resume, checkpoint_meta)
    return result.best_params, result.history


def run_training(
    g: MonitorEntityGraph,
    split: EdgeSplit,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    loss_cfg: Optional[LossConfig] = None,
    checkpoint_path: Optional[str] = None,
    log_path: Optional[str] = None,
    resume: Optional[Checkpoint] = None,
    checkpoint_meta: Optional[Dict[str, Any]] = None,
) -> TrainResult:
    """Same as train() but returns the full TrainResult."""
    loss_cfg = loss_cfg or LossConfig()
    seed = train_cfg.seed
    features = g.feature_matrix()
    g_train, g_eval = message_graphs(g, split)
    supervision = split.train_supervision
    workers = worker_threads()

    if resume is not None:
        params = resume.params
        best_params = resume.best_params or copy_params(params)
        adam = resume.adam or AdamState(lr=train_cfg.lr, weight_decay=train_cfg.weight_decay)
        balancer = resume.balancer
        state = TrainState.from_dict(resume.train_state)
        logger.info(f"Resuming after epoch {state.epoch} (lr {state.lr:g}, best val {state.best_val_loss:.6f})")
    else:
        params = init_params(model_cfg, g.d_feat, g.total_nodes, seed)
        best_params = copy_params(params)
        adam = AdamState(lr=train_cfg.lr, weight_decay=train_cfg.weight_decay)
        balancer = None
        state = TrainState(lr=train_cfg.lr)
    if loss_cfg.balance and balancer is None:
        balancer = BalancerState(decay=loss_cfg.ema_decay, eps=loss_cfg.eps, bce_floor=loss_cfg.bce_floor)

    epochs = range(state.epoch + 1, train_cfg.max_epochs)
    progress = tqdm(epochs, desc="epochs", file=sys.stderr, disable=not sys.stderr.isatty())
    for epoch in progress:
        if state.stopped:
            break
        batches = supervision_batches(supervision, train_cfg.batch_size, seed, epoch, train_cfg.max_batches_per_epoch)
        path_stream = ("frozen",) if train_cfg.freeze_paths else ("epoch", epoch)

        def prepare(b: int) -> PreparedBatch:
            negatives = sample_negatives(g, batches[b], train_cfg.neg_ratio, "dynamic", seed, stream=(epoch, b))
            return prepare_batch(g_train, batches[b], model_cfg, seed, stream=(epoch, b), negatives=negatives, path_stream=path_stream)

        sums = {name: 0.0 for name in ("bce", "top1max", "align", "w_bce", "w_top1", "w_al", "total")}
        adam.lr = state.lr
        for b, batch in enumerate(pipelined(prepare, len(batches), train_cfg.prefetch, workers)):
            zero_grads(params)
            try:
                with Tape() as tape:
                    loss, breakdown = batch_objective(batch, params, model_cfg, loss_cfg, features, balancer, update_balancer=True)
                    tape.backward(loss)
            except NumericError as e:
                logger.error(f"Training diverged at epoch {epoch}, batch {b}: {str(e)}")
                raise TrainingDivergedError(f"Non-finite values at epoch {epoch}, batch {b}: {str(e)}")
            if not np.isfinite(breakdown.total):
                raise TrainingDivergedError(f"Loss is {breakdown.total} at epoch {epoch}, batch {b}")
            adam_step(params, None, adam)
            for key, value in breakdown.as_row().items():
                sums[key] += value

        try:
            val_total = validation_loss(
                g_eval, split.validation, split.val_negatives, params, model_cfg, loss_cfg,
                features, balancer, train_cfg.batch_size, seed,
            )
        except NumericError as e:
            raise TrainingDivergedError(f"Non-finite validation values at epoch {epoch}: {str(e)}")

        state.epoch = epoch
        lr_used = state.lr
        lr_schedule_step(state, val_total, train_cfg.scheduler_patience, train_cfg.scheduler_factor)
        if state.improved:
            best_params = copy_params(params)
        row = {"epoch": epoch}
        row.update({key: value / max(len(batches), 1) for key, value in sums.items()})
        row["val_total"] = val_total
        row["lr"] = lr_used
        state.history.append(row)
        decision = early_stop_check(state, train_cfg.early_stop_patience)
        logger.info(f"Epoch {epoch}: train {row['total']:.5f} val {val_total:.5f} lr {lr_used:g}")
        progress.set_postfix(train=f"{row['total']:.4f}", val=f"{val_total:.4f}")

        if checkpoint_path:
            meta = dict(checkpoint_meta or {})
            save_checkpoint(Checkpoint(
                params=params,
                best_params=best_params,
                adam=adam,
                balancer=balancer,
                train_state=state.to_dict(),
                configs=meta.get("configs", {
                    "model": model_cfg.to_dict(), "train": train_cfg.to_dict(), "loss": loss_cfg.to_dict(),
                }),
                graph_meta=meta.get("graph_meta", {"counts": g.counts, "d_feat": g.d_feat}),
                seed=seed,
                variant=meta.get("variant", "full"),
            ), checkpoint_path)
        if log_path:
            history_frame(state.history).to_csv(log_path, index=False)
        if decision == "stop":
            logger.info(f"Early stopping after epoch {epoch} (best epoch {state.best_epoch})")
            break

    return TrainResult(params=params, best_params=best_params, state=state, adam=adam, balancer=balancer)
