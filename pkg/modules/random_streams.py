import hashlib
from typing import Union

import numpy as np

Key = Union[int, str]


def _key_to_int(key: Key) -> int:
    if isinstance(key, (bool, np.bool_)):
        return int(key)
    if isinstance(key, (int, np.integer)):
        value = int(key)
        if value < 0:
            # SeedSequence only takes non-negative entropy
            value = (1 << 63) + value
        return value
    digest = hashlib.sha256(str(key).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def make_rng(seed: int, *keys: Key) -> np.random.Generator:
    """
    Counter-based generator keyed by (seed, *keys).

    Any stream can be recreated from its key alone, so parallel workers draw
    the same numbers no matter the order they run in.

    Args:
        seed: global seed
        keys: stream identifiers such as ("epoch", 3, "batch", 7)

    Returns:
        numpy.random.Generator backed by Philox
    """
    entropy = [_key_to_int(seed)] + [_key_to_int(k) for k in keys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def name_hash(name: str) -> int:
    """Stable 64-bit hash of a node name."""
    return _key_to_int(name)
