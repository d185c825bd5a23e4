import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from modules.errors import SamplingError
from modules.monitor_graph import (
    DIMENSION,
    METRIC_DIMENSION,
    MONITOR,
    MONITOR_DIMENSION,
    MONITOR_METRIC,
    NODE_TYPES,
    RELATION_SCHEMA,
    RELATIONS,
    MonitorEntityGraph,
    NodeId,
    sample_unlinked_dimensions,
)
from modules.random_streams import make_rng

# Configure logging
logging.basicConfig(level=logging.INFO,
                   format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

DEFAULT_HOPS = 2
DEFAULT_FANOUT = 10
DEFAULT_PATHS_PER_NODE = 5
MAX_WALK_RETRIES = 10

# Relation cycle (relation, reversed) walked from each start type; period 4.
# From a monitor: emits, has, has^-1, emits^-1 -> m k d k m k d ...
# From a dimension: has^-1, emits^-1, emits, has -> d k m k d k m ...
SCHEMA_CYCLES = {
    MONITOR: (
        (MONITOR_METRIC, False),
        (METRIC_DIMENSION, False),
        (METRIC_DIMENSION, True),
        (MONITOR_METRIC, True),
    ),
    DIMENSION: (
        (METRIC_DIMENSION, True),
        (MONITOR_METRIC, True),
        (MONITOR_METRIC, False),
        (METRIC_DIMENSION, False),
    ),
}

Step = Tuple[str, bool]


def schema_lengths(levels: Iterable[int]) -> List[int]:
    """Path lengths 2 + 4(l - 1) for the given levels l >= 1."""
    return [2 + 4 * (int(level) - 1) for level in levels]


def is_schema_length(length: int) -> bool:
    return length >= 2 and (length - 2) % 4 == 0


def step_types(start_type: str, length: int) -> List[str]:
    """Node types visited by a schema walk of ``length`` steps from ``start_type``."""
    types = [start_type]
    for step in range(length):
        relation, reverse = SCHEMA_CYCLES[start_type][step % 4]
        src_type, dst_type = RELATION_SCHEMA[relation]
        types.append(src_type if reverse else dst_type)
    return types


# Subgraphs

@dataclass
class Subgraph:
    """
    Sampled neighbourhood of a batch of monitor–dimension pairs.

    Local node ids follow the graph's slot order (monitors, then metrics,
    then dimensions, each by index), so ``node_slot`` is sorted and the
    local <-> global mapping is a bijection on included nodes.
    """

    seed_edges: np.ndarray
    node_slot: np.ndarray
    node_type: np.ndarray
    node_index: np.ndarray
    edges: Dict[str, np.ndarray]
    seed: int = 0

    @property
    def num_nodes(self) -> int:
        return int(self.node_slot.size)

    def num_edges(self, relation: Optional[str] = None) -> int:
        if relation is not None:
            return int(self.edges[relation].shape[0])
        return int(sum(e.shape[0] for e in self.edges.values()))

    def local_ids(self, slots: np.ndarray) -> np.ndarray:
        """
        Map slot ids to local ids.

        Raises:
            SamplingError: a slot is not part of the subgraph
        """
        slots = np.asarray(slots, dtype=np.int64)
        pos = np.searchsorted(self.node_slot, slots)
        pos = np.clip(pos, 0, max(self.num_nodes - 1, 0))
        if self.num_nodes == 0 or np.any(self.node_slot[pos] != slots):
            raise SamplingError("Requested node is not part of the sampled subgraph")
        return pos

    def global_node(self, local: int) -> NodeId:
        return NodeId(NODE_TYPES[int(self.node_type[local])], int(self.node_index[local]))


def _seed_slots(g: MonitorEntityGraph, edge_batch: np.ndarray, extra_nodes: Optional[Sequence[NodeId]]) -> np.ndarray:
    offsets = g.slot_offsets
    slots = [edge_batch[:, 0] + offsets[MONITOR], edge_batch[:, 1] + offsets[DIMENSION]]
    if extra_nodes:
        slots.append(np.array([offsets[n.type] + int(n.index) for n in extra_nodes], dtype=np.int64))
    return np.unique(np.concatenate(slots))


def sample_subgraph(
    g: MonitorEntityGraph,
    edge_batch: np.ndarray,
    hops: int = DEFAULT_HOPS,
    fanout: Optional[int] = DEFAULT_FANOUT,
    seed: int = 0,
    batch_key: Tuple = (),
    extra_nodes: Optional[Sequence[NodeId]] = None,
) -> Subgraph:
    """
    BFS neighbourhood sampling from both endpoints of each batch edge.

    Every relation is expanded in both directions; at most ``fanout``
    neighbours are kept per node, per relation direction, per hop. The batch
    edges themselves never become message edges.

    Args:
        g: message-passing graph
        edge_batch: [B × 2] (monitor index, dimension index) supervision pairs
        hops: number of expansion rounds (>= 1)
        fanout: per-node, per-relation cap; None keeps every neighbour
        seed: global seed
        batch_key: stream key, e.g. (epoch, batch)
        extra_nodes: additional seed nodes (e.g. negative dimensions)

    Returns:
        Subgraph

    Raises:
        SamplingError: empty batch
    """
    edge_batch = np.asarray(edge_batch, dtype=np.int64).reshape(-1, 2)
    if edge_batch.shape[0] == 0:
        raise SamplingError("sample_subgraph needs a non-empty edge batch")
    if hops < 1:
        raise ValueError(f"hops must be >= 1, got {hops}")
    if fanout is not None and fanout < 1:
        raise ValueError(f"fanout must be >= 1 or None, got {fanout}")

    rng = make_rng(seed, "subgraph", *batch_key)
    offsets = g.slot_offsets
    type_of_slot = np.repeat(np.arange(len(NODE_TYPES)), [g.counts[t] for t in NODE_TYPES])

    visited = set(_seed_slots(g, edge_batch, extra_nodes).tolist())
    frontier = sorted(visited)
    sampled: Dict[str, set] = {relation: set() for relation in RELATIONS}

    for _ in range(hops):
        next_frontier = set()
        for slot in frontier:
            node_type = NODE_TYPES[type_of_slot[slot]]
            index = slot - offsets[node_type]
            for relation in RELATIONS:
                src_type, dst_type = RELATION_SCHEMA[relation]
                for reverse, own_type, other_type in ((False, src_type, dst_type), (True, dst_type, src_type)):
                    if own_type != node_type:
                        continue
                    neighbours = g.neighbors(relation, index, reverse=reverse)
                    if neighbours.size == 0:
                        continue
                    if fanout is not None and neighbours.size > fanout:
                        neighbours = np.sort(rng.choice(neighbours, size=fanout, replace=False))
                    for other in neighbours.tolist():
                        pair = (other, index) if reverse else (index, other)
                        sampled[relation].add(pair)
                        other_slot = offsets[other_type] + other
                        if other_slot not in visited:
                            visited.add(other_slot)
                            next_frontier.add(other_slot)
        frontier = sorted(next_frontier)
        if not frontier:
            break

    # Supervision pairs stay out of the message edges
    supervision = set(map(tuple, edge_batch.tolist()))
    sampled[MONITOR_DIMENSION] -= supervision

    node_slot = np.array(sorted(visited), dtype=np.int64)
    node_type = type_of_slot[node_slot]
    node_index = node_slot - np.array([offsets[NODE_TYPES[t]] for t in node_type], dtype=np.int64)
    subgraph = Subgraph(
        seed_edges=edge_batch,
        node_slot=node_slot,
        node_type=node_type,
        node_index=node_index,
        edges={},
        seed=seed,
    )
    for relation in RELATIONS:
        src_type, dst_type = RELATION_SCHEMA[relation]
        pairs = np.array(sorted(sampled[relation]), dtype=np.int64).reshape(-1, 2)
        if pairs.size:
            local_src = subgraph.local_ids(pairs[:, 0] + offsets[src_type])
            local_dst = subgraph.local_ids(pairs[:, 1] + offsets[dst_type])
            subgraph.edges[relation] = np.stack([local_src, local_dst], axis=1)
        else:
            subgraph.edges[relation] = np.zeros((0, 2), dtype=np.int64)
    return subgraph


# Negatives

@dataclass
class NegativeBatch:
    """Corrupted (monitor, dimension) pairs; ``positive_index`` points at the corrupted positive."""

    pairs: np.ndarray
    positive_index: np.ndarray
    ratio: float

    def __len__(self):
        return int(self.pairs.shape[0])

    def grouped(self, num_positives: int) -> Tuple[np.ndarray, np.ndarray]:
        """
        Negatives laid out per positive.

        Returns:
            (index [num_positives × width] into pairs, mask of valid entries)
        """
        counts = np.bincount(self.positive_index, minlength=num_positives)
        width = int(counts.max()) if counts.size else 0
        index = np.zeros((num_positives, width), dtype=np.int64)
        mask = np.zeros((num_positives, width), dtype=bool)
        fill = np.zeros(num_positives, dtype=np.int64)
        for i, p in enumerate(self.positive_index):
            index[p, fill[p]] = i
            mask[p, fill[p]] = True
            fill[p] += 1
        return index, mask


def sample_negatives(
    g: MonitorEntityGraph,
    positives: np.ndarray,
    ratio: float = 2.0,
    mode: str = "dynamic",
    seed: int = 0,
    stream: Tuple = (),
) -> NegativeBatch:
    """
    Corrupt the dimension endpoint of positive pairs.

    round(ratio × |positives|) negatives are drawn; positive i receives
    floor(n / B) of them plus one more when i < n mod B. Each corrupted
    dimension is uniform over dimensions not linked to the monitor in ``g``.

    Args:
        g: full graph (membership is checked against every known edge)
        positives: [B × 2] (monitor, dimension) pairs
        ratio: negatives per positive (> 0)
        mode: "dynamic" draws from the (seed, stream) key, e.g. per (epoch, batch);
            "fixed" ignores the stream so the draw is reproducible per seed
        seed: global seed
        stream: stream key used in dynamic mode

    Returns:
        NegativeBatch

    Raises:
        SamplingError: a monitor is linked to every dimension
    """
    if ratio <= 0:
        raise ValueError(f"ratio must be positive, got {ratio}")
    if mode not in ("dynamic", "fixed"):
        raise ValueError(f"mode must be 'dynamic' or 'fixed', got {mode!r}")
    positives = np.asarray(positives, dtype=np.int64).reshape(-1, 2)
    num_pos = positives.shape[0]
    total = int(np.floor(ratio * num_pos + 0.5))
    per = np.full(num_pos, total // max(num_pos, 1), dtype=np.int64)
    per[: total - int(per.sum())] += 1
    positive_index = np.repeat(np.arange(num_pos), per)

    rng = make_rng(seed, "negatives", mode, *(stream if mode == "dynamic" else ()))
    dims = sample_unlinked_dimensions(g, positives[positive_index, 0], 1, rng)[:, 0]
    pairs = np.stack([positives[positive_index, 0], dims], axis=1) if total else np.zeros((0, 2), dtype=np.int64)
    return NegativeBatch(pairs=pairs, positive_index=positive_index, ratio=float(ratio))


# Paths

@dataclass
class PathSample:
    """
    A schema walk of ``length`` steps from ``target``.

    ``mask`` is False on padding positions appended after a dead end.
    """

    target: NodeId
    node_types: List[str]
    node_index: np.ndarray
    relations: List[Step]
    mask: np.ndarray
    seed: int

    @property
    def length(self) -> int:
        return len(self.relations)

    @property
    def nodes(self) -> List[NodeId]:
        return [NodeId(t, int(i)) for t, i in zip(self.node_types, self.node_index)]

    def slots(self, g: MonitorEntityGraph) -> np.ndarray:
        offsets = g.slot_offsets
        return np.array([offsets[t] + int(i) for t, i in zip(self.node_types, self.node_index)], dtype=np.int64)


def _walk(g: MonitorEntityGraph, target: NodeId, cycle: Sequence[Step], length: int, restart_p: float, rng) -> List[int]:
    """One walk attempt; returns the visited indices (shorter than length+1 on a dead end)."""
    walk = [int(target.index)]
    budget = 100 * (length + 1)
    while len(walk) < length + 1 and budget > 0:
        budget -= 1
        if restart_p > 0 and len(walk) > 1 and rng.random() < restart_p:
            walk = [int(target.index)]
            continue
        relation, reverse = cycle[(len(walk) - 1) % 4]
        neighbours = g.neighbors(relation, walk[-1], reverse=reverse)
        if neighbours.size == 0:
            break
        walk.append(int(neighbours[rng.integers(neighbours.size)]))
    return walk


def sample_paths(
    g: MonitorEntityGraph,
    target: NodeId,
    L: int,
    M_samples: int = DEFAULT_PATHS_PER_NODE,
    restart_p: float = 0.0,
    seed: int = 0,
    stream: Tuple = (),
) -> List[PathSample]:
    """
    Sample schema-constrained random walks from a monitor or dimension.

    Each step picks uniformly among neighbours along the schema relation.
    A dead-end walk is retried up to 10 times; the longest attempt is then
    padded with its last node (under that node's type) and the padding is masked. A restart re-begins
    the walk at the target.

    Args:
        g: graph
        target: start node (monitor or dimension)
        L: path length, one of 2, 6, 10, ...
        M_samples: number of walks
        restart_p: per-step probability of restarting at the target
        seed: global seed
        stream: extra stream key (e.g. epoch)

    Returns:
        list of PathSample

    Raises:
        SamplingError: target has no schema-legal first step, or L is not a schema length
    """
    if not is_schema_length(L):
        raise SamplingError(f"Path length {L} is not of the form 2 + 4(l - 1)")
    if M_samples < 1:
        raise ValueError(f"M_samples must be >= 1, got {M_samples}")
    if not 0.0 <= restart_p < 1.0:
        raise ValueError(f"restart_p must be in [0, 1), got {restart_p}")
    if target.type not in SCHEMA_CYCLES:
        raise SamplingError(f"Paths start at monitors or dimensions, not {target.type}")
    cycle = SCHEMA_CYCLES[target.type]
    first_relation, first_reverse = cycle[0]
    if g.neighbors(first_relation, int(target.index), reverse=first_reverse).size == 0:
        raise SamplingError(f"{target.type} {target.index} has no schema-legal first step")

    types = step_types(target.type, L)
    relations = [cycle[i % 4] for i in range(L)]
    rng = make_rng(seed, "paths", target.type, int(target.index), L, *stream)
    samples = []
    for _ in range(M_samples):
        best: List[int] = []
        for _attempt in range(MAX_WALK_RETRIES):
            walk = _walk(g, target, cycle, L, restart_p, rng)
            if len(walk) > len(best):
                best = walk
            if len(walk) == L + 1:
                break
        mask = np.zeros(L + 1, dtype=bool)
        mask[: len(best)] = True
        node_types = list(types)
        if len(best) < L + 1:
            logger.debug(f"Walk from {target} dead-ended after {len(best) - 1} steps; padding")
            pad = L + 1 - len(best)
            # padding repeats the last reached node under its own type
            node_types = types[: len(best)] + [types[len(best) - 1]] * pad
            best = best + [best[-1]] * pad
        samples.append(PathSample(
            target=target,
            node_types=node_types,
            node_index=np.array(best, dtype=np.int64),
            relations=relations,
            mask=mask,
            seed=seed,
        ))
    return samples


@dataclass
class PathBatch:
    """
    Paths for a list of targets in slot form.

    slots / mask: [n_targets × n_paths × (max_length + 1)]. Positions past a
    shorter path's end are masked like padding. ``path_mask`` marks paths
    that exist at all (a target without a legal first step has none).
    """

    slots: np.ndarray
    mask: np.ndarray
    path_mask: np.ndarray
    lengths: List[int] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return self.slots.size == 0 or not self.path_mask.any()


def empty_path_batch(n_targets: int) -> PathBatch:
    return PathBatch(
        slots=np.zeros((n_targets, 0, 1), dtype=np.int64),
        mask=np.zeros((n_targets, 0, 1), dtype=bool),
        path_mask=np.zeros((n_targets, 0), dtype=bool),
        lengths=[],
    )


def build_path_batch(
    g: MonitorEntityGraph,
    targets: Sequence[NodeId],
    path_lengths: Sequence[int],
    paths_per_node: int = DEFAULT_PATHS_PER_NODE,
    restart_p: float = 0.0,
    seed: int = 0,
    stream: Tuple = (),
) -> PathBatch:
    """
    Sample ``paths_per_node`` walks per length for every target.

    Targets with no legal first step get fully masked path slots.
    """
    if not path_lengths or paths_per_node < 1:
        return empty_path_batch(len(targets))
    width = max(path_lengths) + 1
    n_paths = len(path_lengths) * paths_per_node
    slots = np.zeros((len(targets), n_paths, width), dtype=np.int64)
    mask = np.zeros((len(targets), n_paths, width), dtype=bool)
    path_mask = np.zeros((len(targets), n_paths), dtype=bool)
    lengths = [L for L in path_lengths for _ in range(paths_per_node)]

    for row, target in enumerate(targets):
        for block, L in enumerate(path_lengths):
            try:
                samples = sample_paths(g, target, L, paths_per_node, restart_p, seed, stream)
            except SamplingError as e:
                logger.debug(f"No paths for {target}: {str(e)}")
                continue
            for j, sample in enumerate(samples):
                col = block * paths_per_node + j
                slots[row, col, : L + 1] = sample.slots(g)
                mask[row, col, : L + 1] = sample.mask
                path_mask[row, col] = True
    return PathBatch(slots=slots, mask=mask, path_mask=path_mask, lengths=lengths)
