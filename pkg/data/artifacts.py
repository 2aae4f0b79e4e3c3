"""
Artifact writer: CSV tables, JSON documents and the run manifest.

Every file written through an ArtifactWriter is hashed into manifest.json so a
rerun with the same seeds can be compared byte for byte.
"""
import csv
import hashlib
import json
import logging
import os
import platform
import sys
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, TypeVar

import numpy as np
import scipy

from common.constants import (
    APP_NAME,
    APP_VERSION,
    LOGGER_NAME,
    MANIFEST_FILE,
    ErrorMessage,
    SuccessMessage,
)
from common.errors import ArtifactError

logger = logging.getLogger(f"{LOGGER_NAME}.artifacts")

T = TypeVar("T")


def to_jsonable(value: Any) -> Any:
    """numpy scalars and arrays to plain Python; non-finite floats to None."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if np.isfinite(value) else None
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, Enum):
        return value.value
    return value


def sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


class ArtifactWriter:
    """Writes artifacts into one output directory and remembers what it wrote."""

    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        self.written: Dict[str, str] = {}
        self.error_count = 0
        self.last_error: Optional[str] = None
        self._execute_safe("create_output_dir", lambda: os.makedirs(out_dir, exist_ok=True), out_dir)
        if not os.access(out_dir, os.W_OK):
            raise ArtifactError(ErrorMessage.OUTPUT_NOT_WRITABLE.format(path=out_dir))

    def _execute_safe(self, operation_name: str, func: Callable[[], T], path: Optional[str] = None) -> T:
        """Run a file operation; failures are recorded and re-raised as ArtifactError."""
        try:
            return func()
        except (OSError, TypeError, ValueError) as e:
            self._record_error(operation_name, e, path)
            raise ArtifactError(ErrorMessage.ARTIFACT_WRITE_FAILED.format(path=path, error=e)) from e

    def _record_error(self, action: str, error: Exception, path: Optional[str] = None) -> None:
        self.error_count += 1
        msg = f"[IO] {action} failed"
        if path:
            msg += f" ({path})"
        msg += f": {error}"
        self.last_error = msg
        logger.error(msg)

    def path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def write_csv(self, name: str, fieldnames: Sequence[str], rows: List[Dict[str, Any]]) -> str:
        """Header row plus one row per dict, in the given order."""
        path = self.path(name)

        def execute():
            with open(path, "w", encoding="utf-8", newline="") as f:
                writer = csv.DictWriter(f, fieldnames=list(fieldnames), extrasaction="ignore", lineterminator="\n")
                writer.writeheader()
                for row in rows:
                    writer.writerow({k: to_jsonable(row.get(k, "")) for k in fieldnames})

        self._execute_safe("write_csv", execute, path)
        return self._register(name, path)

    def write_json(self, name: str, payload: Any) -> str:
        path = self.path(name)

        def execute():
            with open(path, "w", encoding="utf-8") as f:
                json.dump(to_jsonable(payload), f, indent=2, sort_keys=True)
                f.write("\n")

        self._execute_safe("write_json", execute, path)
        return self._register(name, path)

    def _register(self, name: str, path: str) -> str:
        self.written[name] = path
        logger.info(SuccessMessage.ARTIFACT_WRITTEN.format(path=path))
        return path

    def write_manifest(self, scenario: str, seeds: Dict[str, int], config: Dict, summary: Dict,
                       wall_time: float) -> str:
        """manifest.json: scenario, seeds, versions, platform, wall time, config echo, hashes, summary."""
        manifest = {
            "app": {"name": APP_NAME, "version": APP_VERSION},
            "scenario": scenario,
            "seeds": seeds,
            "versions": {
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
            "platform": f"{platform.system()} {platform.machine()}",
            "argv": sys.argv[1:],
            "wall_time": wall_time,
            "config": config,
            "artifacts": {name: sha256_file(path) for name, path in sorted(self.written.items())},
            "summary": summary,
        }
        return self.write_json(MANIFEST_FILE, manifest)
