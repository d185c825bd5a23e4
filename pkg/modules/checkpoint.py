import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from modules.autograd import AdamState, Tensor
from modules.errors import CheckpointError
from modules.losses import BalancerState

# Configure logging
logging.basicConfig(level=logging.INFO,
                   format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
BLOB_DTYPE = "<f8"


@dataclass
class Checkpoint:
    """
    Everything needed to resume or evaluate a run.

    Stored as ``<name>.json`` (manifest) plus ``<name>.bin`` (little-endian
    f64 blob in the manifest's tensor order).
    """

    params: Dict[str, Tensor]
    best_params: Optional[Dict[str, Tensor]] = None
    adam: Optional[AdamState] = None
    balancer: Optional[BalancerState] = None
    train_state: Dict[str, Any] = field(default_factory=dict)
    configs: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    graph_meta: Dict[str, Any] = field(default_factory=dict)
    seed: int = 0
    variant: str = "full"


def blob_path(path: str) -> str:
    root, _ = os.path.splitext(path)
    return f"{root}.bin"


def _entries(ckpt: Checkpoint) -> List[Tuple[str, np.ndarray]]:
    entries = [(f"param/{name}", p.data) for name, p in ckpt.params.items()]
    if ckpt.best_params is not None:
        entries += [(f"best/{name}", p.data) for name, p in ckpt.best_params.items()]
    if ckpt.adam is not None:
        entries += [(f"adam_m/{name}", m) for name, m in ckpt.adam.m.items()]
        entries += [(f"adam_v/{name}", v) for name, v in ckpt.adam.v.items()]
    return entries


def save_checkpoint(ckpt: Checkpoint, path: str) -> str:
    """
    Write manifest and parameter blob.

    Args:
        ckpt: checkpoint contents
        path: manifest path (``.json``); the blob goes next to it as ``.bin``

    Returns:
        str: manifest path
    """
    entries = _entries(ckpt)
    tensors, offset = [], 0
    chunks = []
    for key, array in entries:
        flat = np.ascontiguousarray(array, dtype=BLOB_DTYPE).reshape(-1)
        tensors.append({"key": key, "shape": list(array.shape), "offset": offset})
        offset += flat.size
        chunks.append(flat.tobytes())
    blob = b"".join(chunks)

    manifest = {
        "version": CHECKPOINT_VERSION,
        "dtype": BLOB_DTYPE,
        "blob": os.path.basename(blob_path(path)),
        "blob_bytes": len(blob),
        "blob_sha256": hashlib.sha256(blob).hexdigest(),
        "tensors": tensors,
        "adam": None if ckpt.adam is None else {
            "lr": ckpt.adam.lr,
            "weight_decay": ckpt.adam.weight_decay,
            "beta1": ckpt.adam.beta1,
            "beta2": ckpt.adam.beta2,
            "eps": ckpt.adam.eps,
            "step": ckpt.adam.step,
        },
        "balancer": None if ckpt.balancer is None else ckpt.balancer.to_dict(),
        "train_state": ckpt.train_state,
        "configs": ckpt.configs,
        "graph_meta": ckpt.graph_meta,
        "seed": ckpt.seed,
        "variant": ckpt.variant,
    }

    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    for target, payload, mode in ((blob_path(path), blob, "wb"), (path, json.dumps(manifest, indent=2), "w")):
        tmp = f"{target}.tmp"
        with open(tmp, mode) as handle:
            handle.write(payload)
        os.replace(tmp, target)
    logger.info(f"Saved checkpoint to {path} ({len(entries)} tensors, {len(blob)} bytes)")
    return path


def load_checkpoint(path: str) -> Checkpoint:
    """
    Read a checkpoint written by save_checkpoint.

    Raises:
        CheckpointError: unreadable manifest, version mismatch, blob length or hash mismatch
    """
    try:
        with open(path, "r", encoding="utf-8") as handle:
            manifest = json.load(handle)
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as e:
        raise CheckpointError(f"Could not read checkpoint manifest {path}: {str(e)}")
    if not isinstance(manifest, dict):
        raise CheckpointError(f"Checkpoint manifest {path} must hold a JSON object")
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"Checkpoint version {manifest.get('version')} != {CHECKPOINT_VERSION}")

    try:
        with open(blob_path(path), "rb") as handle:
            blob = handle.read()
    except OSError as e:
        raise CheckpointError(f"Could not read checkpoint blob: {str(e)}")
    try:
        return _checkpoint_from_manifest(manifest, blob)
    except CheckpointError:
        raise
    except (KeyError, TypeError, ValueError, AttributeError) as e:
        raise CheckpointError(f"{path}: malformed checkpoint manifest ({type(e).__name__}: {str(e)})")


def _checkpoint_from_manifest(manifest: Dict[str, Any], blob: bytes) -> Checkpoint:
    if len(blob) != manifest["blob_bytes"]:
        raise CheckpointError(f"Blob has {len(blob)} bytes, manifest declares {manifest['blob_bytes']}")
    if hashlib.sha256(blob).hexdigest() != manifest["blob_sha256"]:
        raise CheckpointError("Blob hash does not match the manifest")

    values = np.frombuffer(blob, dtype=manifest.get("dtype", BLOB_DTYPE))
    groups: Dict[str, Dict[str, np.ndarray]] = {"param": {}, "best": {}, "adam_m": {}, "adam_v": {}}
    for entry in manifest["tensors"]:
        kind, name = entry["key"].split("/", 1)
        if kind not in groups:
            raise CheckpointError(f"Unknown tensor group '{kind}' in manifest")
        size = int(np.prod(entry["shape"], dtype=np.int64))
        start = int(entry["offset"])
        if start + size > values.size:
            raise CheckpointError(f"Tensor {entry['key']} runs past the end of the blob")
        groups[kind][name] = values[start:start + size].reshape(entry["shape"]).astype(np.float64)

    def as_params(arrays: Dict[str, np.ndarray]) -> Dict[str, Tensor]:
        return {name: Tensor(array, requires_grad=True, name=name) for name, array in arrays.items()}

    adam = None
    if manifest.get("adam") is not None:
        adam = AdamState(**manifest["adam"])
        adam.m = groups["adam_m"]
        adam.v = groups["adam_v"]
        if set(adam.m) != set(groups["param"]) and adam.step > 0:
            raise CheckpointError("Optimiser moments do not cover the parameter ordering")

    return Checkpoint(
        params=as_params(groups["param"]),
        best_params=as_params(groups["best"]) if groups["best"] else None,
        adam=adam,
        balancer=BalancerState.from_dict(manifest["balancer"]) if manifest.get("balancer") else None,
        train_state=manifest.get("train_state", {}),
        configs=manifest.get("configs", {}),
        graph_meta=manifest.get("graph_meta", {}),
        seed=int(manifest.get("seed", 0)),
        variant=manifest.get("variant", "full"),
    )


def file_sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
