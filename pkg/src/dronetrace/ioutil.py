"""Small filesystem helpers used by several modules."""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

from .errors import IoFailure, MissingFile, WriteFailure


def atomic_write_bytes(path: Path, data: bytes) -> None:
    """Write ``data`` to ``path`` via temp-file-then-rename.

    A killed process never leaves a half-written file at ``path``.
    """
    path = Path(path)
    try:
        fd, tmp = tempfile.mkstemp(dir=str(path.parent), prefix=path.name + ".", suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, path)
        except BaseException:
            try:
                os.unlink(tmp)
            except OSError:
                pass
            raise
    except OSError as exc:
        raise WriteFailure(f"cannot write {path}: {exc}") from exc


def atomic_write_text(path: Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def read_bytes(path: Path) -> bytes:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(str(path))
    try:
        return path.read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
