"""
Run manifests and diagnostics files
"""

import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from . import __version__
from .utils import sha256_file

logger = logging.getLogger(__name__)

MANIFEST_NAME = 'manifest.json'
DIAGNOSTICS_NAME = 'diagnostics.json'


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec='seconds')


@dataclass
class RunManifest:
    """Config snapshot, code version, seed, wall times and emitted files with hashes"""

    command: str
    config: Dict[str, Any]
    seed: Optional[int]
    version: str = __version__
    started: str = field(default_factory=_now)
    finished: Optional[str] = None
    files: Dict[str, str] = field(default_factory=dict)

    def add_file(self, path: Union[str, Path], root: Union[str, Path]) -> None:
        path = Path(path)
        self.files[path.relative_to(root).as_posix()] = sha256_file(path)

    def finish(self) -> None:
        self.finished = _now()

    def to_dict(self) -> Dict[str, Any]:
        return {
            'command': self.command,
            'version': self.version,
            'seed': self.seed,
            'started': self.started,
            'finished': self.finished,
            'config': self.config,
            'files': dict(sorted(self.files.items())),
        }

    def write(self, out_dir: Union[str, Path]) -> Path:
        path = Path(out_dir) / MANIFEST_NAME
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(self.to_dict(), f, indent=2)
        logger.info("Manifest written to %s (%d files)", path, len(self.files))
        return path


def write_diagnostics(out_dir: Union[str, Path], error: Union[BaseException, str],
                      messages: Optional[List[str]] = None) -> Path:
    """
    Write diagnostics.json naming the failure

    Args:
        out_dir: Run directory
        error: Exception (its class name is recorded) or an error-class name
        messages: Per-path abort messages

    Returns:
        Path of the diagnostics file
    """
    if isinstance(error, BaseException):
        payload = error.to_dict() if hasattr(error, 'to_dict') else {
            'error': type(error).__name__,
            'message': str(error),
        }
    else:
        payload = {'error': error, 'message': ''}
    if messages:
        payload['aborted_paths'] = [m for m in messages if m]

    path = Path(out_dir) / DIAGNOSTICS_NAME
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(payload, f, indent=2)
    logger.error("Run failed with %s; diagnostics in %s", payload['error'], path)
    return path
