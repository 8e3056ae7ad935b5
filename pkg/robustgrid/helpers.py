from __future__ import annotations

import json
import logging
import os
import tempfile
import time
from pathlib import Path
from typing import Any, Optional, Sequence, Union

log = logging.getLogger("robustgrid")

PathLike = Union[str, os.PathLike]


def bundled_data_path() -> Path:
    """Directory holding the networks and configs shipped with the package."""
    return Path(__file__).parent / "data" / "default"


def resolve_path(name: PathLike, *search: Optional[Path]) -> Path:
    """Find `name` as given, then relative to each search directory, then in the bundled data."""
    path = Path(name)
    if path.is_absolute():
        return path
    for base in (*search, bundled_data_path()):
        if base is None:
            continue
        candidate = base / path
        if candidate.exists():
            return candidate
    return path


def atomic_write(path: PathLike, data: Union[str, bytes]) -> Path:
    """Write through a temporary file in the same directory and rename it over `path`."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": ""})) as fp:
            fp.write(data)
            fp.flush()
            os.fsync(fp.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise
    log.debug(f"wrote {path}")
    return path


def atomic_write_json(path: PathLike, document: Any) -> Path:
    return atomic_write(path, json.dumps(document, indent=2, sort_keys=True) + "\n")


def read_json(path: PathLike) -> Any:
    with open(path, "r", encoding="utf-8") as fp:
        return json.load(fp)


def strictly_increasing(values: Sequence[float]) -> bool:
    return all(a < b for a, b in zip(values, values[1:]))


class Deadline:
    """Wall clock limit measured with `time.perf_counter`. `None` means no limit."""

    def __init__(self, seconds: Optional[float]):
        self.seconds = seconds
        self.start = time.perf_counter()

    @property
    def elapsed(self) -> float:
        return time.perf_counter() - self.start

    def expired(self) -> bool:
        return self.seconds is not None and self.elapsed >= self.seconds

    def __repr__(self):
        return f"Deadline(seconds={self.seconds}, elapsed={self.elapsed:.3f})"
