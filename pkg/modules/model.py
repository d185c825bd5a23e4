import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from modules.autograd import (
    Tensor,
    bmm,
    concat,
    gather_rows,
    matmul,
    mul,
    relu,
    reshape,
    scatter_add_rows,
    segment_softmax,
    sigmoid,
    softmax_rows,
    tensor_sum,
    transpose,
)
from modules.errors import SamplingError, ShapeError, WidthMismatchError
from modules.monitor_graph import (
    DIMENSION,
    METRIC_DIMENSION,
    MONITOR,
    MONITOR_DIMENSION,
    MONITOR_METRIC,
    RELATIONS,
    MonitorEntityGraph,
    NodeId,
)
from modules.random_streams import make_rng
from modules.sampling import (
    DEFAULT_FANOUT,
    DEFAULT_HOPS,
    DEFAULT_PATHS_PER_NODE,
    NegativeBatch,
    PathBatch,
    PathSample,
    Subgraph,
    build_path_batch,
    empty_path_batch,
    is_schema_length,
    sample_subgraph,
)
from modules.settings import ConfigMixin

# Configure logging
logging.basicConfig(level=logging.INFO,
                   format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

RELATION_KEYS = {
    MONITOR_DIMENSION: "md",
    METRIC_DIMENSION: "kd",
    MONITOR_METRIC: "mk",
}

POOLING_MODES = ("mean", "first")


@dataclass
class ModelConfig(ConfigMixin):
    layers: int = 3
    hidden: int = 64
    out: int = 32
    heads: int = 4
    d_emb: int = 16
    path_lengths: Tuple[int, ...] = (2, 6, 10)
    paths_per_node: int = DEFAULT_PATHS_PER_NODE
    pooling: str = "mean"
    use_rwa: bool = True
    restart_p: float = 0.0
    hops: int = DEFAULT_HOPS
    fanout: Optional[int] = DEFAULT_FANOUT
    dropout: float = 0.0

    def __post_init__(self):
        self.path_lengths = tuple(int(L) for L in self.path_lengths)
        if self.layers < 1:
            raise ValueError(f"layers must be >= 1, got {self.layers}")
        if self.heads < 1 or self.hidden % self.heads or self.out % self.heads:
            raise ValueError(f"hidden ({self.hidden}) and out ({self.out}) must be divisible by heads ({self.heads})")
        if self.d_emb < 0:
            raise ValueError(f"d_emb must be >= 0, got {self.d_emb}")
        if self.pooling not in POOLING_MODES:
            raise ValueError(f"pooling must be one of {POOLING_MODES}, got {self.pooling!r}")
        bad = [L for L in self.path_lengths if not is_schema_length(L)]
        if bad:
            raise ValueError(f"path lengths {bad} are not of the form 2 + 4(l - 1)")
        if self.dropout != 0.0:
            raise ValueError("dropout is not supported; keep it at 0")
        if not 0.0 <= self.restart_p < 1.0:
            raise ValueError(f"restart_p must be in [0, 1), got {self.restart_p}")

    @property
    def layer_widths(self) -> List[int]:
        """Output width of each attention layer."""
        return [self.hidden] * (self.layers - 1) + [self.out]

    @property
    def max_positions(self) -> int:
        return max(self.path_lengths, default=0) + 1

    @property
    def rwa_scale(self) -> float:
        return float(np.sqrt(self.out // self.heads))

    @classmethod
    def desk(cls, **overrides) -> "ModelConfig":
        return cls().replace(**overrides)

    @classmethod
    def production(cls, **overrides) -> "ModelConfig":
        return cls(hidden=256, out=128, d_emb=64).replace(**overrides)


@dataclass
class AttentionRecord:
    """Normalised attention of one layer: alpha is [E × heads] over (receiver, sender, relation) edges."""

    layer: int
    receivers: np.ndarray
    senders: np.ndarray
    relation_ids: np.ndarray
    alpha: Tensor

    @property
    def heads(self) -> int:
        return int(self.alpha.shape[1]) if self.alpha.ndim == 2 else 0

    def relation_mask(self, relation: str) -> np.ndarray:
        return self.relation_ids == RELATIONS.index(relation)


# Parameters

def glorot(shape: Tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    fan_in, fan_out = shape[0], shape[-1]
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init_params(cfg: ModelConfig, d_feat: int, total_nodes: int, seed: int) -> Dict[str, Tensor]:
    """
    Create every learnable weight.

    Args:
        cfg: model configuration
        d_feat: intrinsic feature width of the graph
        total_nodes: number of embedding slots
        seed: global seed; each parameter draws from its own keyed stream

    Returns:
        dict: parameter name -> Tensor(requires_grad=True)
    """
    d0 = d_feat + cfg.d_emb
    if d0 < 1:
        raise ShapeError("Nodes need at least one input channel (features or embeddings)")
    shapes: Dict[str, Tuple[int, ...]] = {}
    if cfg.d_emb:
        shapes["embedding"] = (total_nodes, cfg.d_emb)
    d_in = d0
    for layer, d_out in enumerate(cfg.layer_widths):
        for relation in RELATIONS:
            key = RELATION_KEYS[relation]
            for proj in ("W_Q", "W_K", "W_V"):
                shapes[f"layer{layer}.{key}.{proj}"] = (d_in, d_out)
        shapes[f"layer{layer}.W_update"] = (d_in + d_out, d_out)
        d_in = d_out
    for proj in ("W_Q", "W_K", "W_V"):
        shapes[f"rwa.{proj}"] = (d0, cfg.out)
    shapes["mix.W"] = (2 * cfg.out, cfg.out)

    params = {}
    for name, shape in shapes.items():
        rng = make_rng(seed, "init", name)
        if name == "embedding":
            # Each row is its own fan-in-1 lookup
            bound = np.sqrt(6.0 / (1 + shape[1]))
            data = rng.uniform(-bound, bound, size=shape)
        else:
            data = glorot(shape, rng)
        params[name] = Tensor(data, requires_grad=True, name=name)
    logger.info(f"Initialised {len(params)} parameter tensors ({sum(p.size for p in params.values())} weights)")
    return params


def check_compatible(params: Dict[str, Tensor], cfg: ModelConfig, g: MonitorEntityGraph):
    """
    Raises:
        WidthMismatchError: parameters were trained for another feature width or node count
    """
    expected_in = g.d_feat + cfg.d_emb
    found_in = params["layer0.md.W_Q"].shape[0]
    if found_in != expected_in:
        raise WidthMismatchError(
            f"Checkpoint expects input width {found_in}, graph gives {g.d_feat} features + {cfg.d_emb} embedding"
        )
    if cfg.d_emb and params["embedding"].shape[0] != g.total_nodes:
        raise WidthMismatchError(
            f"Checkpoint has {params['embedding'].shape[0]} embedding slots, graph has {g.total_nodes} nodes"
        )


def copy_params(params: Dict[str, Tensor]) -> Dict[str, Tensor]:
    return {name: Tensor(p.data.copy(), requires_grad=True, name=name) for name, p in params.items()}


# Inputs

def positional_encoding(positions: int, width: int) -> np.ndarray:
    """Sinusoidal table: sin on even channels, cos on odd channels."""
    pos = np.arange(positions, dtype=np.float64)[:, None]
    channel = np.arange(width)[None, :]
    rates = 1.0 / np.power(10000.0, (2 * (channel // 2)) / float(max(width, 1)))
    angles = pos * rates
    return np.where(channel % 2 == 0, np.sin(angles), np.cos(angles))


def node_inputs(slots: np.ndarray, features: np.ndarray, params: Dict[str, Tensor]) -> Tensor:
    """h0 = concat(intrinsic features, learnable embedding) for the given slots."""
    slots = np.asarray(slots, dtype=np.int64).reshape(-1)
    parts = []
    if features.shape[1]:
        parts.append(Tensor(features[slots]))
    if "embedding" in params:
        parts.append(gather_rows(params["embedding"], slots))
    return parts[0] if len(parts) == 1 else concat(parts, axis=1)


# Layers

def attention_layer_forward(
    subgraph: Subgraph,
    h_in: Tensor,
    params: Dict[str, Tensor],
    layer_idx: int,
    heads: int,
) -> Tuple[Tensor, AttentionRecord]:
    """
    One relation-aware multi-head attention layer.

    Every edge carries messages both ways through its relation's Q/K/V
    projections. Scores (q_i . k_j) / sqrt(heads * d_o) are normalised with
    one softmax per receiver and head over all incident edges.

    Args:
        subgraph: sampled neighbourhood
        h_in: [N × d_in] node states
        params: model parameters
        layer_idx: layer number
        heads: number of attention heads

    Returns:
        (h_out [N × d_out], AttentionRecord)
    """
    n = subgraph.num_nodes
    key = RELATION_KEYS[RELATIONS[0]]
    d_in, d_out = params[f"layer{layer_idx}.{key}.W_Q"].shape
    if h_in.ndim != 2 or h_in.shape != (n, d_in):
        raise ShapeError(f"Layer {layer_idx} expects h_in of shape ({n}, {d_in}), got {h_in.shape}")
    d_o = d_out // heads

    scores, values, receivers, senders, relation_ids = [], [], [], [], []
    for r_id, relation in enumerate(RELATIONS):
        edges = subgraph.edges[relation]
        if edges.shape[0] == 0:
            continue
        prefix = f"layer{layer_idx}.{RELATION_KEYS[relation]}"
        src = np.concatenate([edges[:, 0], edges[:, 1]])
        dst = np.concatenate([edges[:, 1], edges[:, 0]])
        q = gather_rows(matmul(h_in, params[f"{prefix}.W_Q"]), dst)
        k = gather_rows(matmul(h_in, params[f"{prefix}.W_K"]), src)
        v = gather_rows(matmul(h_in, params[f"{prefix}.W_V"]), src)
        e = src.size
        scores.append(tensor_sum(reshape(mul(q, k), (e, heads, d_o)), axis=2))
        values.append(v)
        receivers.append(dst)
        senders.append(src)
        relation_ids.append(np.full(e, r_id, dtype=np.int64))

    if scores:
        receivers_all = np.concatenate(receivers)
        score = concat(scores, axis=0) / float(np.sqrt(heads * d_o))
        alpha = segment_softmax(score, receivers_all, n)
        value = concat(values, axis=0)
        e_total = receivers_all.size
        weighted = mul(reshape(alpha, (e_total, heads, 1)), reshape(value, (e_total, heads, d_o)))
        message = scatter_add_rows(reshape(weighted, (e_total, d_out)), receivers_all, n)
        record = AttentionRecord(
            layer=layer_idx,
            receivers=receivers_all,
            senders=np.concatenate(senders),
            relation_ids=np.concatenate(relation_ids),
            alpha=alpha,
        )
    else:
        message = Tensor(np.zeros((n, d_out)))
        empty = np.zeros(0, dtype=np.int64)
        record = AttentionRecord(layer_idx, empty, empty, empty, Tensor(np.zeros((0, heads))))

    h_out = relu(matmul(concat([h_in, message], axis=1), params[f"layer{layer_idx}.W_update"]))
    return h_out, record


def path_attention_batch(
    x: Tensor,
    mask: np.ndarray,
    params: Dict[str, Tensor],
    pooling: str = "mean",
) -> Tensor:
    """
    Self-attention over a batch of position-encoded paths, pooled to one vector each.

    Args:
        x: [P × T × d] node embeddings plus position encodings
        mask: [P × T] valid positions; fully masked paths pool to zeros
        params: holds rwa.W_Q, rwa.W_K, rwa.W_V
        pooling: "mean" over valid positions or "first"

    Returns:
        Tensor [P × d_out]
    """
    p, t, d = x.shape
    mask = np.asarray(mask, dtype=bool)
    flat = reshape(x, (p * t, d))
    d_out = params["rwa.W_V"].shape[1]
    q = reshape(matmul(flat, params["rwa.W_Q"]), (p, t, d_out))
    k = reshape(matmul(flat, params["rwa.W_K"]), (p, t, d_out))
    v = reshape(matmul(flat, params["rwa.W_V"]), (p, t, d_out))
    scores = bmm(q, transpose(k)) / float(np.sqrt(d_out))
    attn = softmax_rows(scores, mask=np.broadcast_to(mask[:, None, :], (p, t, t)))
    attended = bmm(attn, v)

    if pooling == "first":
        weights = np.zeros((p, t))
        weights[:, 0] = mask[:, 0]
    else:
        counts = mask.sum(axis=1, keepdims=True)
        weights = mask / np.where(counts > 0, counts, 1)
    pooled = bmm(Tensor(weights.reshape(p, 1, t)), attended)
    return reshape(pooled, (p, d_out))


def path_attention(
    path: PathSample,
    node_embeds: Tensor,
    rwa_params: Dict[str, Tensor],
    pooling: str = "mean",
    max_positions: Optional[int] = None,
) -> Tensor:
    """
    Embed a single path: E = node embeddings + sinusoidal positions, then attention and pooling.

    Args:
        path: sampled path (its mask excludes padding)
        node_embeds: [(L + 1) × d] embeddings of the path's nodes
        rwa_params: rwa.W_Q / rwa.W_K / rwa.W_V
        pooling: "mean" or "first"
        max_positions: capacity of the position table

    Returns:
        Tensor [d_out]

    Raises:
        SamplingError: every position is masked
        ShapeError: the path does not fit the position table
    """
    t = path.length + 1
    if max_positions is not None and t > max_positions:
        raise ShapeError(f"Path of {t} positions exceeds position table of {max_positions}")
    if node_embeds.shape[0] != t:
        raise ShapeError(f"Expected {t} node embeddings, got {node_embeds.shape[0]}")
    mask = np.asarray(path.mask, dtype=bool).reshape(1, t)
    if not mask.any():
        raise SamplingError("Path has no unmasked position")
    encoded = node_embeds + Tensor(positional_encoding(t, node_embeds.shape[1]))
    pooled = path_attention_batch(reshape(encoded, (1, t, node_embeds.shape[1])), mask, rwa_params, pooling)
    return reshape(pooled, (pooled.shape[1],))


def rwa_aggregate_batch(x: Tensor, paths: Tensor, path_mask: np.ndarray, scale: float) -> Tuple[Tensor, Tensor]:
    """
    Cross-attention from node states over their path embeddings.

    Args:
        x: [B × d] node states
        paths: [B × W × d] path embeddings
        path_mask: [B × W] existing paths; rows without paths aggregate to zeros
        scale: score divisor

    Returns:
        (aggregate [B × d], weights [B × W])
    """
    b, w, d = paths.shape
    scores = reshape(bmm(reshape(x, (b, 1, d)), transpose(paths)), (b, w)) / float(scale)
    weights = softmax_rows(scores, mask=np.asarray(path_mask, dtype=bool))
    out = reshape(bmm(reshape(weights, (b, 1, w)), paths), (b, d))
    return out, weights


def rwa_aggregate(x_node: Tensor, path_embeds: Tensor, scale: Optional[float] = None) -> Tensor:
    """
    Weighted sum of path embeddings, weights softmax((x . e_p) / scale) over paths.

    Raises:
        ShapeError: empty path set or width mismatch
    """
    if path_embeds.ndim != 2 or path_embeds.shape[0] == 0:
        raise ShapeError("rwa_aggregate needs at least one path embedding")
    w, d = path_embeds.shape
    if x_node.size != d:
        raise ShapeError(f"Node width {x_node.size} does not match path width {d}")
    scale = float(np.sqrt(d)) if scale is None else scale
    out, _ = rwa_aggregate_batch(reshape(x_node, (1, d)), reshape(path_embeds, (1, w, d)), np.ones((1, w), dtype=bool), scale)
    return reshape(out, (d,))


def forward(
    subgraph: Subgraph,
    params: Dict[str, Tensor],
    cfg: ModelConfig,
    features: np.ndarray,
    targets: np.ndarray,
    paths: Optional[PathBatch] = None,
) -> Tuple[Tensor, List[AttentionRecord]]:
    """
    Full network on a sampled subgraph.

    Args:
        subgraph: sampled neighbourhood
        params: model parameters
        cfg: model configuration
        features: [total_nodes × d_feat] intrinsic features in slot order
        targets: local ids of the nodes to represent
        paths: path slots per target; None or empty turns the RWA branch into zeros

    Returns:
        (representations [len(targets) × out], per-layer attention records)
    """
    h = node_inputs(subgraph.node_slot, features, params)
    records = []
    for layer in range(cfg.layers):
        h, record = attention_layer_forward(subgraph, h, params, layer, cfg.heads)
        records.append(record)

    targets = np.asarray(targets, dtype=np.int64)
    h_t = gather_rows(h, targets)
    n_t = targets.size

    if cfg.use_rwa and paths is not None and not paths.empty:
        if paths.slots.shape[0] != n_t:
            raise ShapeError(f"Path batch covers {paths.slots.shape[0]} targets, expected {n_t}")
        _, w, t = paths.slots.shape
        if t > cfg.max_positions:
            raise ShapeError(f"Paths of {t} positions exceed position table of {cfg.max_positions}")
        x = node_inputs(paths.slots.reshape(-1), features, params)
        d0 = x.shape[1]
        x = reshape(x, (n_t * w, t, d0)) + Tensor(positional_encoding(t, d0))
        embeds = path_attention_batch(x, paths.mask.reshape(n_t * w, t), params, cfg.pooling)
        rwa, _ = rwa_aggregate_batch(h_t, reshape(embeds, (n_t, w, cfg.out)), paths.path_mask, cfg.rwa_scale)
    else:
        rwa = Tensor(np.zeros((n_t, cfg.out)))

    reps = matmul(concat([h_t, rwa], axis=1), params["mix.W"])
    return reps, records


# Scoring

def pair_logits(rep_monitor: Tensor, rep_dimension: Tensor) -> Tensor:
    """Row-wise dot products of [n × d] representations."""
    if rep_monitor.shape != rep_dimension.shape:
        raise ShapeError(f"Representation widths differ: {rep_monitor.shape} vs {rep_dimension.shape}")
    if rep_monitor.ndim == 1:
        return tensor_sum(mul(rep_monitor, rep_dimension))
    return tensor_sum(mul(rep_monitor, rep_dimension), axis=1)


def score_pairs(rep_monitor: Tensor, rep_dimension: Tensor) -> Tensor:
    """Probability that a monitor uses a dimension: sigmoid of the dot product."""
    return sigmoid(pair_logits(rep_monitor, rep_dimension))


# Batch plumbing shared by training and evaluation

@dataclass
class PreparedBatch:
    """
    Everything sampled for one batch of scored pairs.

    ``pair_rows`` / ``negative_rows`` index into ``targets`` for the monitor
    and dimension of each pair.
    """

    positives: np.ndarray
    negatives: Optional[NegativeBatch]
    subgraph: Subgraph
    targets: np.ndarray
    target_nodes: List[NodeId]
    paths: PathBatch
    pair_rows: np.ndarray
    negative_rows: np.ndarray


def prepare_batch(
    g: MonitorEntityGraph,
    positives: np.ndarray,
    cfg: ModelConfig,
    seed: int,
    stream: Tuple = (),
    negatives: Optional[NegativeBatch] = None,
    path_stream: Optional[Tuple] = None,
) -> PreparedBatch:
    """
    Sample the subgraph and paths needed to score ``positives`` (and ``negatives``).

    Args:
        g: message-passing graph
        positives: [B × 2] (monitor, dimension) pairs to score
        cfg: model configuration (hops, fanout, paths)
        seed: global seed
        stream: stream key for the subgraph, e.g. (epoch, batch)
        negatives: optional corrupted pairs scored alongside
        path_stream: stream key for paths (defaults to ``stream``)

    Returns:
        PreparedBatch
    """
    positives = np.asarray(positives, dtype=np.int64).reshape(-1, 2)
    neg_pairs = negatives.pairs if negatives is not None else np.zeros((0, 2), dtype=np.int64)
    offsets = g.slot_offsets
    all_pairs = np.concatenate([positives, neg_pairs], axis=0)
    target_slots = np.unique(np.concatenate([all_pairs[:, 0] + offsets[MONITOR], all_pairs[:, 1] + offsets[DIMENSION]]))

    extra = [NodeId(DIMENSION, int(d)) for d in np.unique(neg_pairs[:, 1])]
    subgraph = sample_subgraph(g, positives, cfg.hops, cfg.fanout, seed, batch_key=tuple(stream), extra_nodes=extra)
    targets = subgraph.local_ids(target_slots)
    target_nodes = [subgraph.global_node(int(local)) for local in targets]

    def rows(pairs: np.ndarray) -> np.ndarray:
        if pairs.shape[0] == 0:
            return np.zeros((0, 2), dtype=np.int64)
        return np.stack([
            np.searchsorted(target_slots, pairs[:, 0] + offsets[MONITOR]),
            np.searchsorted(target_slots, pairs[:, 1] + offsets[DIMENSION]),
        ], axis=1)

    if cfg.use_rwa and cfg.path_lengths and cfg.paths_per_node:
        paths = build_path_batch(
            g, target_nodes, cfg.path_lengths, cfg.paths_per_node, cfg.restart_p, seed,
            stream=tuple(stream if path_stream is None else path_stream),
        )
    else:
        paths = empty_path_batch(len(target_nodes))

    return PreparedBatch(
        positives=positives,
        negatives=negatives,
        subgraph=subgraph,
        targets=targets,
        target_nodes=target_nodes,
        paths=paths,
        pair_rows=rows(positives),
        negative_rows=rows(neg_pairs),
    )


def batch_logits(
    batch: PreparedBatch,
    params: Dict[str, Tensor],
    cfg: ModelConfig,
    features: np.ndarray,
) -> Tuple[Tensor, Tensor, List[AttentionRecord]]:
    """
    Returns:
        (positive logits [B], negative logits [n], attention records)
    """
    reps, records = forward(batch.subgraph, params, cfg, features, batch.targets, batch.paths)
    pos = pair_logits(gather_rows(reps, batch.pair_rows[:, 0]), gather_rows(reps, batch.pair_rows[:, 1]))
    if batch.negative_rows.shape[0]:
        neg = pair_logits(gather_rows(reps, batch.negative_rows[:, 0]), gather_rows(reps, batch.negative_rows[:, 1]))
    else:
        neg = Tensor(np.zeros(0))
    return pos, neg, records
