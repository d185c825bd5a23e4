import json
import logging
import os
import platform
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from typing import Any, Dict, Optional

import numpy as np

from modules import __version__
from modules.checkpoint import file_sha256

# Configure logging
logging.basicConfig(level=logging.INFO,
                   format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


@dataclass
class RunManifest:
    """
    Reproducibility record written next to every command's outputs.

    ``inputs`` and ``artifacts`` map file paths to sha256 digests.
    """

    command: str
    config: Dict[str, Any]
    seed: int
    variant: Optional[str] = None
    version: str = __version__
    inputs: Dict[str, str] = field(default_factory=dict)
    artifacts: Dict[str, str] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)
    started_at: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    environment: Dict[str, str] = field(default_factory=lambda: {
        "python": platform.python_version(),
        "numpy": np.__version__,
    })

    def record_input(self, path: str):
        self.inputs[path] = file_sha256(path)

    def record_artifact(self, path: str):
        self.artifacts[path] = file_sha256(path)

    @contextmanager
    def timed(self, name: str):
        started = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] = time.perf_counter() - started

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def write(self, out_dir: str) -> str:
        """Write ``manifest.json`` into ``out_dir`` and return its path."""
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, MANIFEST_NAME)
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_dict(), handle, indent=2, sort_keys=True)
        logger.info(f"Wrote run manifest to {path}")
        return path


def load_manifest(path: str) -> RunManifest:
    with open(path, "r", encoding="utf-8") as handle:
        data = json.load(handle)
    return RunManifest(**data)
