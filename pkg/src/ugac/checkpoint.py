"""Checkpoint files: named float64 arrays plus a JSON metadata record, stored with ``np.savez``."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import DataError

FORMAT = "ugac-checkpoint"
VERSION = 1
_META_KEY = "__meta__"


def save(path: str | Path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    """Write atomically: a temp file in the target directory, then rename."""
    path = Path(path)
    if _META_KEY in arrays:
        raise ValueError(f"array name {_META_KEY!r} is reserved")
    record = {"format": FORMAT, "version": VERSION, **meta}
    blob = np.frombuffer(json.dumps(record).encode("utf-8"), dtype=np.uint8)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            np.savez(fh, **{_META_KEY: blob}, **{k: np.asarray(v) for k, v in arrays.items()})
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    try:
        with np.load(path, allow_pickle=False) as z:
            if _META_KEY not in z.files:
                raise DataError(f"{path}: not a checkpoint (no metadata)")
            meta = json.loads(z[_META_KEY].tobytes().decode("utf-8"))
            arrays = {k: z[k] for k in z.files if k != _META_KEY}
    except (OSError, ValueError) as exc:
        raise DataError(f"{path}: unreadable checkpoint ({exc})") from exc
    if meta.get("format") != FORMAT or meta.get("version") != VERSION:
        raise DataError(f"{path}: unsupported checkpoint format {meta.get('format')!r} v{meta.get('version')}")
    return meta, arrays
