"""
Base interface for file-backed storage.
"""

import json
import math
import os
import tempfile
from pathlib import Path
from typing import Any, Union

from app.utils.logger import get_logger

logger = get_logger(__name__)

PathLike = Union[str, Path]


def json_safe(value: Any) -> Any:
    """Replace inf and nan with None so the payload is strict JSON."""
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    return value


class BaseFileInterface:
    """Common write helpers: every file is replaced atomically, never left half written."""

    @staticmethod
    def write_text(path: PathLike, text: str) -> Path:
        path = Path(path)
        if path.parent and not path.parent.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, 'w', encoding='utf-8', newline='') as handle:
                handle.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        logger.debug(f"Wrote {path}")
        return path

    @staticmethod
    def read_text(path: PathLike) -> str:
        return Path(path).read_text(encoding='utf-8')

    @staticmethod
    def dumps_json(payload: Any) -> str:
        return json.dumps(json_safe(payload), indent=2, allow_nan=False) + '\n'
