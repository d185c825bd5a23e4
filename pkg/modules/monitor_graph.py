import json
import logging
import os
from dataclasses import dataclass
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from modules.errors import (
    DanglingNodeError,
    DuplicateEdgeError,
    EmptyNameError,
    GraphFormatError,
    SamplingError,
    SchemaViolationError,
    WidthMismatchError,
)
from modules.random_streams import make_rng, name_hash

# Configure logging
logging.basicConfig(level=logging.INFO,
                   format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

MONITOR = "monitor"
METRIC = "metric"
DIMENSION = "dimension"
NODE_TYPES = (MONITOR, METRIC, DIMENSION)

MONITOR_DIMENSION = "monitor_associated_with_dimension"
METRIC_DIMENSION = "metric_has_dimension"
MONITOR_METRIC = "monitor_emits_metric"
RELATIONS = (MONITOR_DIMENSION, METRIC_DIMENSION, MONITOR_METRIC)

# relation -> (source type, destination type)
RELATION_SCHEMA = {
    MONITOR_DIMENSION: (MONITOR, DIMENSION),
    METRIC_DIMENSION: (METRIC, DIMENSION),
    MONITOR_METRIC: (MONITOR, METRIC),
}

# Supervision target of the recommendation task
TARGET_RELATION = MONITOR_DIMENSION

FORMAT_VERSION = 1


class NodeId(NamedTuple):
    type: str
    index: int


EdgeInput = Union[np.ndarray, Iterable[Tuple[NodeId, NodeId]]]


class MonitorEntityGraph:
    """
    Heterogeneous graph of monitors, metrics and dimensions.

    Built through build_graph(); read-only afterwards. Edges of each relation
    are stored as a lexicographically sorted [E × 2] array of per-type indices
    together with CSR adjacency in both directions.
    """

    def __init__(
        self,
        counts: Dict[str, int],
        edges: Dict[str, np.ndarray],
        names: Dict[str, List[str]],
        features: Optional[Dict[str, np.ndarray]] = None,
        seed: Optional[int] = None,
    ):
        self.counts = {t: int(counts[t]) for t in NODE_TYPES}
        self.names = {t: list(names[t]) for t in NODE_TYPES}
        self.seed = seed
        self._edges: Dict[str, np.ndarray] = {}
        self._csr: Dict[Tuple[str, bool], Tuple[np.ndarray, np.ndarray]] = {}
        self._keys: Dict[str, np.ndarray] = {}

        for relation in RELATIONS:
            array = np.asarray(edges.get(relation, np.zeros((0, 2))), dtype=np.int64).reshape(-1, 2)
            order = np.lexsort((array[:, 1], array[:, 0]))
            array = array[order]
            array.flags.writeable = False
            self._edges[relation] = array

            src_type, dst_type = RELATION_SCHEMA[relation]
            keys = array[:, 0] * self.counts[dst_type] + array[:, 1]
            keys.flags.writeable = False
            self._keys[relation] = keys
            self._csr[(relation, False)] = _csr(array[:, 0], array[:, 1], self.counts[src_type])
            self._csr[(relation, True)] = _csr(array[:, 1], array[:, 0], self.counts[dst_type])

        self.features: Optional[Dict[str, np.ndarray]] = None
        if features is not None:
            self.features = {}
            for node_type in NODE_TYPES:
                matrix = np.array(features[node_type], dtype=np.float64)
                matrix.flags.writeable = False
                self.features[node_type] = matrix

    # Sizes and slots

    @property
    def total_nodes(self) -> int:
        return sum(self.counts.values())

    @property
    def d_feat(self) -> int:
        if self.features is None:
            return 0
        return int(self.features[MONITOR].shape[1])

    @property
    def slot_offsets(self) -> Dict[str, int]:
        offsets, running = {}, 0
        for node_type in NODE_TYPES:
            offsets[node_type] = running
            running += self.counts[node_type]
        return offsets

    def slot_id(self, node: NodeId) -> int:
        """Row of the node in the learnable embedding table."""
        return self.slot_offsets[node.type] + int(node.index)

    def feature_matrix(self) -> np.ndarray:
        """Intrinsic features stacked in slot order, [total_nodes × d_feat]."""
        if self.features is None:
            return np.zeros((self.total_nodes, 0))
        return np.concatenate([self.features[t] for t in NODE_TYPES], axis=0)

    # Edges

    def edges(self, relation: str) -> np.ndarray:
        return self._edges[relation]

    def num_edges(self, relation: str) -> int:
        return int(self._edges[relation].shape[0])

    def neighbors(self, relation: str, index: int, reverse: bool = False) -> np.ndarray:
        """
        Sorted neighbours of a node along a relation.

        Args:
            relation: relation name
            index: per-type index of the source node (destination when reverse)
            reverse: walk the relation backwards

        Returns:
            numpy array of per-type indices
        """
        indptr, indices = self._csr[(relation, reverse)]
        return indices[indptr[index]:indptr[index + 1]]

    def degree(self, relation: str, side: str = "src") -> np.ndarray:
        indptr, _ = self._csr[(relation, side == "dst")]
        return np.diff(indptr)

    def has_edge(self, relation: str, src: int, dst: int) -> bool:
        keys = self._keys[relation]
        key = int(src) * self.counts[RELATION_SCHEMA[relation][1]] + int(dst)
        pos = np.searchsorted(keys, key)
        return bool(pos < keys.size and keys[pos] == key)

    def contains_edges(self, relation: str, pairs: np.ndarray) -> np.ndarray:
        """Vectorised membership test for an [n × 2] array of index pairs."""
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        keys = self._keys[relation]
        query = pairs[:, 0] * self.counts[RELATION_SCHEMA[relation][1]] + pairs[:, 1]
        if keys.size == 0:
            return np.zeros(len(query), dtype=bool)
        pos = np.clip(np.searchsorted(keys, query), 0, keys.size - 1)
        return keys[pos] == query

    # Derived graphs

    def restrict(self, relation: str, edges: np.ndarray) -> "MonitorEntityGraph":
        """Copy of this graph with one relation's edge list replaced (e.g. message-passing edges only)."""
        new_edges = {r: self._edges[r] for r in RELATIONS}
        new_edges[relation] = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        return build_graph(self.names, new_edges, self.features, seed=self.seed)

    def with_features(self, features: Dict[str, np.ndarray]) -> "MonitorEntityGraph":
        return build_graph(self.names, dict(self._edges), features, seed=self.seed)

    def __eq__(self, other):
        if not isinstance(other, MonitorEntityGraph):
            return NotImplemented
        if self.counts != other.counts or self.names != other.names:
            return False
        if any(not np.array_equal(self._edges[r], other._edges[r]) for r in RELATIONS):
            return False
        if (self.features is None) != (other.features is None):
            return False
        if self.features is not None:
            return all(np.array_equal(self.features[t], other.features[t]) for t in NODE_TYPES)
        return True

    def __repr__(self):
        edge_counts = ", ".join(f"{r}={self.num_edges(r)}" for r in RELATIONS)
        return f"MonitorEntityGraph(counts={self.counts}, {edge_counts}, d_feat={self.d_feat})"


def _csr(src: np.ndarray, dst: np.ndarray, num_src: int) -> Tuple[np.ndarray, np.ndarray]:
    order = np.lexsort((dst, src))
    indptr = np.zeros(num_src + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    indptr = np.cumsum(indptr)
    indices = dst[order]
    indptr.flags.writeable = False
    indices.flags.writeable = False
    return indptr, indices


def _edge_array(relation: str, raw: EdgeInput, counts: Dict[str, int]) -> np.ndarray:
    src_type, dst_type = RELATION_SCHEMA[relation]
    if isinstance(raw, np.ndarray):
        array = raw.astype(np.int64).reshape(-1, 2)
    else:
        pairs = []
        for src, dst in raw:
            if not isinstance(src, NodeId) or not isinstance(dst, NodeId):
                pairs.append((int(src), int(dst)))
                continue
            if src.type != src_type or dst.type != dst_type:
                raise SchemaViolationError(
                    f"Edge ({src.type}->{dst.type}) violates {relation} ({src_type}->{dst_type})"
                )
            pairs.append((src.index, dst.index))
        array = np.array(pairs, dtype=np.int64).reshape(-1, 2)

    if array.size:
        if array[:, 0].min() < 0 or array[:, 0].max() >= counts[src_type]:
            raise DanglingNodeError(f"{relation}: source index outside 0..{counts[src_type] - 1}")
        if array[:, 1].min() < 0 or array[:, 1].max() >= counts[dst_type]:
            raise DanglingNodeError(f"{relation}: destination index outside 0..{counts[dst_type] - 1}")
        keys = array[:, 0] * counts[dst_type] + array[:, 1]
        if np.unique(keys).size != keys.size:
            raise DuplicateEdgeError(f"{relation} contains duplicate edges")
    return array


def build_graph(
    nodes: Dict[str, Union[int, Sequence[str]]],
    edges: Dict[str, EdgeInput],
    features: Optional[Dict[str, np.ndarray]] = None,
    seed: Optional[int] = None,
) -> MonitorEntityGraph:
    """
    Validate and index a monitor entity graph.

    Args:
        nodes: node type -> list of names (or a count, names are then generated)
        edges: relation -> [E × 2] index array or iterable of (NodeId, NodeId)
        features: optional node type -> [n × d_feat] intrinsic features
        seed: generator seed carried in the graph metadata

    Returns:
        MonitorEntityGraph

    Raises:
        SchemaViolationError: unknown relation or endpoint types not matching it
        DanglingNodeError: edge endpoint outside its type's node range
        DuplicateEdgeError: repeated edge within a relation
    """
    names: Dict[str, List[str]] = {}
    for node_type in NODE_TYPES:
        spec = nodes.get(node_type, 0)
        if isinstance(spec, (int, np.integer)):
            names[node_type] = [f"{node_type}-{i}" for i in range(int(spec))]
        else:
            names[node_type] = [str(n) for n in spec]
    counts = {t: len(names[t]) for t in NODE_TYPES}

    unknown = set(edges) - set(RELATIONS)
    if unknown:
        raise SchemaViolationError(f"Unknown relation(s): {sorted(unknown)}")

    arrays = {relation: _edge_array(relation, edges.get(relation, np.zeros((0, 2))), counts) for relation in RELATIONS}

    if features is not None:
        widths = set()
        for node_type in NODE_TYPES:
            matrix = np.asarray(features[node_type])
            if matrix.ndim != 2 or matrix.shape[0] != counts[node_type]:
                raise WidthMismatchError(f"Features for {node_type} have shape {matrix.shape}, expected ({counts[node_type]}, d)")
            widths.add(matrix.shape[1])
        if len(widths) != 1:
            raise WidthMismatchError(f"All node types need the same feature width, got {sorted(widths)}")

    return MonitorEntityGraph(counts, arrays, names, features, seed=seed)


# Statistics

def strict_subset_fraction(g: MonitorEntityGraph) -> float:
    """
    Fraction of monitors whose dimensions are a strict subset of the
    dimensions emitted by their metrics (monitors without metrics are skipped).
    """
    considered, strict = 0, 0
    for monitor in range(g.counts[MONITOR]):
        metrics = g.neighbors(MONITOR_METRIC, monitor)
        if metrics.size == 0:
            continue
        emitted = set()
        for metric in metrics:
            emitted.update(g.neighbors(METRIC_DIMENSION, int(metric)).tolist())
        if not emitted:
            continue
        considered += 1
        used = set(g.neighbors(MONITOR_DIMENSION, monitor).tolist())
        if used < emitted:
            strict += 1
    return strict / considered if considered else 0.0


def closure_violations(g: MonitorEntityGraph) -> int:
    """Number of monitor–dimension edges not emitted by any metric of that monitor."""
    violations = 0
    for monitor, dimension in g.edges(MONITOR_DIMENSION):
        metrics = g.neighbors(MONITOR_METRIC, int(monitor))
        if not any(g.has_edge(METRIC_DIMENSION, int(k), int(dimension)) for k in metrics):
            violations += 1
    return violations


def fit_power_law(degrees: np.ndarray, xmin: Optional[int] = None, min_tail: int = 10) -> Optional[Dict[str, float]]:
    """
    Maximum-likelihood tail exponent of a discrete power law.

    Uses the discrete approximation alpha = 1 + n / sum(ln(x / (xmin - 0.5))).
    When xmin is not given, it is chosen to minimise the Kolmogorov–Smirnov
    distance between the empirical and fitted tail.

    Args:
        degrees: positive integer samples
        xmin: lower cutoff of the tail
        min_tail: smallest tail size considered

    Returns:
        dict with alpha, xmin, n_tail, ks; None when there is too little data
    """
    x = np.asarray(degrees, dtype=np.float64)
    x = np.sort(x[x >= 1])
    if x.size < min_tail:
        return None

    def fit_at(cutoff: float) -> Tuple[float, float, int]:
        tail = x[x >= cutoff]
        alpha = 1.0 + tail.size / np.sum(np.log(tail / (cutoff - 0.5)))
        values = np.unique(tail)
        empirical = 1.0 - np.searchsorted(tail, values, side="left") / tail.size
        fitted = ((values - 0.5) / (cutoff - 0.5)) ** (1.0 - alpha)
        return alpha, float(np.max(np.abs(empirical - fitted))), tail.size

    if xmin is not None:
        alpha, ks, n_tail = fit_at(float(xmin))
        return {"alpha": float(alpha), "xmin": int(xmin), "n_tail": int(n_tail), "ks": ks}

    best = None
    for cutoff in np.unique(x):
        if np.count_nonzero(x >= cutoff) < min_tail:
            break
        alpha, ks, n_tail = fit_at(float(cutoff))
        if best is None or ks < best["ks"]:
            best = {"alpha": float(alpha), "xmin": int(cutoff), "n_tail": int(n_tail), "ks": ks}
    return best


def degree_distribution(g: MonitorEntityGraph, relation: str, side: str = "src") -> Dict[str, object]:
    """
    Degree histogram of one side of a relation.

    Args:
        g: graph
        relation: relation name
        side: "src" or "dst"

    Returns:
        dict: node_type, degrees (per node), histogram {degree: count},
        strict_subset_fraction, power_law fit (or None)
    """
    if relation not in RELATION_SCHEMA:
        raise SchemaViolationError(f"Unknown relation '{relation}'")
    if side not in ("src", "dst"):
        raise ValueError(f"side must be 'src' or 'dst', got {side!r}")
    node_type = RELATION_SCHEMA[relation][0 if side == "src" else 1]
    degrees = g.degree(relation, side)
    values, counts = np.unique(degrees, return_counts=True)
    histogram = {int(v): int(c) for v, c in zip(values, counts)}
    return {
        "relation": relation,
        "side": side,
        "node_type": node_type,
        "degrees": degrees,
        "histogram": histogram,
        "strict_subset_fraction": strict_subset_fraction(g),
        "power_law": fit_power_law(degrees[degrees > 0]),
    }


def dimension_correlation(g: MonitorEntityGraph, max_dimensions: int = 300) -> np.ndarray:
    """
    Pairwise Pearson correlation of dimension usage across monitors.

    Only the ``max_dimensions`` most used dimensions are considered and only
    pairs that co-occur on at least one monitor are returned.
    """
    usage = g.degree(MONITOR_DIMENSION, "dst")
    chosen = np.argsort(-usage, kind="stable")[:max_dimensions]
    chosen = chosen[usage[chosen] > 0]
    column = {int(d): i for i, d in enumerate(chosen)}
    incidence = np.zeros((g.counts[MONITOR], chosen.size))
    for monitor, dimension in g.edges(MONITOR_DIMENSION):
        col = column.get(int(dimension))
        if col is not None:
            incidence[monitor, col] = 1.0
    if chosen.size < 2:
        return np.zeros(0)
    corr = np.corrcoef(incidence, rowvar=False)
    co_occurs = (incidence.T @ incidence) > 0
    upper = np.triu(np.ones_like(co_occurs, dtype=bool), k=1)
    return corr[upper & co_occurs]


# Features

def pseudo_embedding(name: str, d_feat: int, seed: int) -> np.ndarray:
    """
    Deterministic unit-norm vector for a node name.

    Identical strings give identical vectors; unrelated strings are close to
    orthogonal in expectation.
    """
    if not name:
        raise EmptyNameError("Node name must be non-empty to derive its features")
    vector = make_rng(seed, "name", name_hash(name)).standard_normal(d_feat)
    return vector / np.linalg.norm(vector)


def load_embedding_file(path: str) -> Dict[str, np.ndarray]:
    """Read an external {name: [floats]} embedding file."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            raw = json.load(handle)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise GraphFormatError(f"Embedding file {path} is not valid JSON: {str(e)}")
    if not isinstance(raw, dict):
        raise GraphFormatError(f"Embedding file {path} must hold a JSON object")
    return {str(k): np.asarray(v, dtype=np.float64) for k, v in raw.items()}


def init_node_features(
    g: MonitorEntityGraph,
    d_feat: int,
    seed: int,
    external: Optional[Union[str, Dict[str, np.ndarray]]] = None,
) -> MonitorEntityGraph:
    """
    Assign intrinsic features derived from node names.

    Args:
        g: graph
        d_feat: feature width
        seed: global seed mixed into every pseudo-embedding
        external: optional path or mapping {name: vector} that overrides
            pseudo-embeddings for the names it covers

    Returns:
        MonitorEntityGraph: a copy carrying the features
    """
    if d_feat < 1:
        raise ValueError(f"d_feat must be positive, got {d_feat}")
    overrides = load_embedding_file(external) if isinstance(external, str) else (external or {})

    features = {}
    for node_type in NODE_TYPES:
        matrix = np.zeros((g.counts[node_type], d_feat))
        for i, name in enumerate(g.names[node_type]):
            if name in overrides:
                vector = np.asarray(overrides[name], dtype=np.float64)
                if vector.shape != (d_feat,):
                    raise WidthMismatchError(f"External embedding for '{name}' has width {vector.size}, expected {d_feat}")
                matrix[i] = vector / np.linalg.norm(vector)
            else:
                matrix[i] = pseudo_embedding(name, d_feat, seed)
        features[node_type] = matrix
    logger.info(f"Initialised {d_feat}-d features for {g.total_nodes} nodes ({len(overrides)} external overrides available)")
    return g.with_features(features)


# Splits

@dataclass
class EdgeSplit:
    """
    Partition of the target relation's edges.

    Other relations are always fully available for message passing.
    Negative arrays hold, per positive, the corrupted dimension indices.
    """

    relation: str
    train_message: np.ndarray
    train_supervision: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    val_negatives: np.ndarray
    test_negatives: np.ndarray
    seed: int

    def sizes(self) -> Dict[str, int]:
        return {
            "train_message": len(self.train_message),
            "train_supervision": len(self.train_supervision),
            "validation": len(self.validation),
            "test": len(self.test),
        }


def _round_half_up(value: float) -> int:
    return int(np.floor(value + 0.5))


def sample_unlinked_dimensions(
    g: MonitorEntityGraph,
    monitors: np.ndarray,
    per_monitor: int,
    rng: np.random.Generator,
    max_rejections: int = 32,
) -> np.ndarray:
    """
    Corrupt the dimension endpoint uniformly over dimensions not linked to each monitor.

    Membership is checked against the full graph held in ``g``.

    Returns:
        [len(monitors) × per_monitor] dimension indices

    Raises:
        SamplingError: a monitor is linked to every dimension
    """
    n_dims = g.counts[DIMENSION]
    monitors = np.asarray(monitors, dtype=np.int64)
    out = np.zeros((monitors.size, per_monitor), dtype=np.int64)
    for row, monitor in enumerate(monitors):
        linked = g.neighbors(MONITOR_DIMENSION, int(monitor))
        if linked.size >= n_dims:
            raise SamplingError(f"Monitor {int(monitor)} is linked to all {n_dims} dimensions; no valid corruption")
        for col in range(per_monitor):
            choice = -1
            for _ in range(max_rejections):
                candidate = int(rng.integers(n_dims))
                pos = np.searchsorted(linked, candidate)
                if pos >= linked.size or linked[pos] != candidate:
                    choice = candidate
                    break
            if choice < 0:
                allowed = np.setdiff1d(np.arange(n_dims), linked, assume_unique=True)
                choice = int(allowed[rng.integers(allowed.size)])
            out[row, col] = choice
    return out


def split_edges(
    g: MonitorEntityGraph,
    relation: str = TARGET_RELATION,
    seed: int = 0,
    neg_ratio: int = 2,
) -> EdgeSplit:
    """
    Split a relation 80/10/10 into train/validation/test and the train part
    70/30 into message-passing and supervision edges, then draw fixed
    evaluation negatives.

    Args:
        g: full graph
        relation: relation to split (the recommendation target)
        seed: split seed
        neg_ratio: fixed negatives per validation/test positive

    Returns:
        EdgeSplit

    Raises:
        SamplingError: fewer than 10 edges
    """
    edges = g.edges(relation)
    total = len(edges)
    if total < 10:
        raise SamplingError(f"Relation {relation} has {total} edges; at least 10 are needed to split")

    rng = make_rng(seed, "split", relation)
    shuffled = edges[rng.permutation(total)]
    n_val = _round_half_up(0.1 * total)
    n_test = _round_half_up(0.1 * total)
    n_train = total - n_val - n_test
    n_message = _round_half_up(0.7 * n_train)

    train = shuffled[:n_train]
    validation = shuffled[n_train:n_train + n_val]
    test = shuffled[n_train + n_val:]

    neg_rng = make_rng(seed, "fixed-negatives", relation)
    split = EdgeSplit(
        relation=relation,
        train_message=train[:n_message].copy(),
        train_supervision=train[n_message:].copy(),
        validation=validation.copy(),
        test=test.copy(),
        val_negatives=sample_unlinked_dimensions(g, validation[:, 0], neg_ratio, neg_rng),
        test_negatives=sample_unlinked_dimensions(g, test[:, 0], neg_ratio, neg_rng),
        seed=seed,
    )
    logger.info(f"Split {relation}: {split.sizes()}")
    return split


# Persistence

def _node_key(node_type: str, index: int) -> str:
    return f"{node_type}:{index}"


def graph_to_document(g: MonitorEntityGraph) -> Dict[str, object]:
    document = {
        "meta": {"version": FORMAT_VERSION, "counts": g.counts, "seed": g.seed, "d_feat": g.d_feat},
        "nodes": [
            {"type": node_type, "index": i, "name": name}
            for node_type in NODE_TYPES
            for i, name in enumerate(g.names[node_type])
        ],
        "edges": {relation: g.edges(relation).tolist() for relation in RELATIONS},
        "features": {},
    }
    if g.features is not None:
        document["features"] = {
            _node_key(node_type, i): row.tolist()
            for node_type in NODE_TYPES
            for i, row in enumerate(g.features[node_type])
        }
    return document


def save_graph(g: MonitorEntityGraph, path: str) -> str:
    """
    Write the graph as a single JSON document.

    Floats are written with Python's shortest round-trip repr, so load_graph
    restores them exactly. The file is replaced atomically.
    """
    document = graph_to_document(g)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    tmp_path = f"{path}.tmp"
    with open(tmp_path, "w", encoding="utf-8") as handle:
        json.dump(document, handle)
    os.replace(tmp_path, path)
    logger.info(f"Saved graph to {path}")
    return path


def load_graph(path: str) -> MonitorEntityGraph:
    """
    Read a graph written by save_graph.

    Raises:
        GraphFormatError: malformed or truncated file, or version mismatch
    """
    try:
        with open(path, "r", encoding="utf-8") as handle:
            document = json.load(handle)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise GraphFormatError(f"Graph file {path} is not valid JSON: {str(e)}")
    return graph_from_document(document, source=path)


def graph_from_document(document: Dict[str, object], source: str = "<document>") -> MonitorEntityGraph:
    try:
        meta = document["meta"]
        if meta.get("version") != FORMAT_VERSION:
            raise GraphFormatError(f"{source}: format version {meta.get('version')} != {FORMAT_VERSION}")
        counts = {t: int(meta["counts"][t]) for t in NODE_TYPES}
        names = {t: [None] * counts[t] for t in NODE_TYPES}
        for node in document["nodes"]:
            names[node["type"]][int(node["index"])] = node["name"]
        if any(name is None for t in NODE_TYPES for name in names[t]):
            raise GraphFormatError(f"{source}: node list does not cover every index")
        edges = {
            relation: np.asarray(document["edges"].get(relation, []), dtype=np.int64).reshape(-1, 2)
            for relation in RELATIONS
        }
        features = None
        d_feat = int(meta.get("d_feat") or 0)
        if d_feat and document.get("features"):
            raw = document["features"]
            features = {
                t: np.array([raw[_node_key(t, i)] for i in range(counts[t])], dtype=np.float64).reshape(counts[t], d_feat)
                for t in NODE_TYPES
            }
    except GraphFormatError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as e:
        raise GraphFormatError(f"{source}: malformed graph document ({type(e).__name__}: {str(e)})")
    return build_graph(names, edges, features, seed=meta.get("seed"))


def load_edge_csvs(paths: Dict[str, str], seed: Optional[int] = None) -> MonitorEntityGraph:
    """
    Build a graph from three CSV edge lists with header "src,dst".

    Node names are the CSV values; each type's nodes are indexed in order of
    first appearance across the files.

    Args:
        paths: relation -> CSV path

    Returns:
        MonitorEntityGraph without features
    """
    missing = set(RELATIONS) - set(paths)
    if missing:
        raise GraphFormatError(f"Missing CSV for relation(s): {sorted(missing)}")

    frames = {}
    for relation in RELATIONS:
        try:
            frame = pd.read_csv(paths[relation], dtype=str, keep_default_na=False)
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise GraphFormatError(f"Could not read {paths[relation]}: {str(e)}")
        if list(frame.columns) != ["src", "dst"]:
            raise GraphFormatError(f"{paths[relation]}: expected header 'src,dst', got {list(frame.columns)}")
        frames[relation] = frame

    index: Dict[str, Dict[str, int]] = {t: {} for t in NODE_TYPES}
    for relation in RELATIONS:
        src_type, dst_type = RELATION_SCHEMA[relation]
        for column, node_type in (("src", src_type), ("dst", dst_type)):
            for name in frames[relation][column]:
                if name not in index[node_type]:
                    index[node_type][name] = len(index[node_type])

    edges = {}
    for relation in RELATIONS:
        src_type, dst_type = RELATION_SCHEMA[relation]
        frame = frames[relation]
        src = frame["src"].map(index[src_type]).to_numpy(dtype=np.int64)
        dst = frame["dst"].map(index[dst_type]).to_numpy(dtype=np.int64)
        edges[relation] = np.stack([src, dst], axis=1) if len(frame) else np.zeros((0, 2), dtype=np.int64)

    names = {t: list(index[t].keys()) for t in NODE_TYPES}
    g = build_graph(names, edges, seed=seed)
    logger.info(f"Imported graph from CSV: {g}")
    return g
