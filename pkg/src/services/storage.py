from __future__ import annotations

import gzip
import hashlib
import io
import logging
import os
from contextlib import contextmanager
from pathlib import Path
from typing import IO, Any, Generator

import orjson as _orjson

from ..exceptions import ConfigError, DataError

logger = logging.getLogger(__name__)

JSON_OPTIONS = _orjson.OPT_INDENT_2 | _orjson.OPT_SORT_KEYS | _orjson.OPT_NON_STR_KEYS | _orjson.OPT_SERIALIZE_NUMPY


def read_json(path: str | Path, default: Any = None) -> Any:
    filepath = Path(path)
    if not filepath.exists():
        if default is None:
            raise ConfigError(f"file not found: {filepath}")
        return default
    try:
        with open(filepath, "rb") as f:
            return _orjson.loads(f.read())
    except _orjson.JSONDecodeError as e:
        logger.exception("read_json: orjson read failed for %s", filepath)
        raise DataError(f"malformed JSON in {filepath}: {e}")


def dumps_json(data: Any) -> bytes:
    return _orjson.dumps(data, option=JSON_OPTIONS) + b"\n"


def write_json(path: str | Path, data: Any) -> None:
    filepath = Path(path)
    with atomic_write(filepath) as tmp_path:
        with open(tmp_path, "wb") as f:
            f.write(dumps_json(data))


@contextmanager
def atomic_write(filepath: Path) -> Generator[Path, None, None]:
    filepath.parent.mkdir(parents=True, exist_ok=True)
    tmp_path = filepath.with_suffix(filepath.suffix + ".tmp")
    try:
        yield tmp_path
        os.replace(tmp_path, filepath)
    except Exception:
        logger.exception("Atomic write failed for %s", filepath)
        if tmp_path.exists():
            tmp_path.unlink()
        raise


def open_text(path: str | Path, mode: str = "r") -> IO[str]:
    """Open a UTF-8 text file, transparently gzip-compressed when the name ends in .gz."""
    filepath = Path(path)
    if "r" in mode and not filepath.exists():
        raise ConfigError(f"input file not found: {filepath}")
    try:
        if filepath.suffix == ".gz":
            # mtime=0 keeps compressed output byte-identical across runs
            if "w" in mode:
                raw = gzip.GzipFile(filepath, mode="wb", mtime=0)
                return io.TextIOWrapper(raw, encoding="utf-8", newline="")
            return gzip.open(filepath, mode + "t", encoding="utf-8", newline="")
        return open(filepath, mode, encoding="utf-8", newline="")
    except OSError as e:
        raise DataError(f"cannot open {filepath}: {e}")


def open_binary(path: str | Path) -> IO[bytes]:
    """Open a file for byte reading, transparently gunzipping .gz names."""
    filepath = Path(path)
    if not filepath.exists():
        raise ConfigError(f"input file not found: {filepath}")
    try:
        if filepath.suffix == ".gz":
            return gzip.open(filepath, "rb")
        return open(filepath, "rb")
    except OSError as e:
        raise DataError(f"cannot open {filepath}: {e}")


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
