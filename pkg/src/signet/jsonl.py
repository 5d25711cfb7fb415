"""Newline-delimited JSON I/O with per-line error accounting."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Iterable, Iterator

from .records import canonical_dumps

__all__ = ["read_jsonl", "iter_jsonl", "write_jsonl", "sha256_file", "JsonlError"]


class JsonlError(ValueError):
    """A line could not be decoded as a JSON object."""

    def __init__(self, path: str, lineno: int, reason: str) -> None:
        super().__init__(f"{path}:{lineno}: {reason}")
        self.path = path
        self.lineno = lineno
        self.reason = reason


def iter_jsonl(path: str | Path, *, strict: bool = True) -> Iterator[tuple[int, Any]]:
    """Yield ``(lineno, obj)`` pairs; blank lines are skipped.

    With ``strict=False`` undecodable lines yield ``(lineno, JsonlError)``
    instead of raising, so callers can count and continue.
    """
    path = Path(path)
    with path.open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                err = JsonlError(str(path), lineno, str(exc))
                if strict:
                    raise err from exc
                yield lineno, err


def read_jsonl(path: str | Path) -> list[Any]:
    return [obj for _, obj in iter_jsonl(path, strict=True)]


def write_jsonl(path: str | Path, objs: Iterable[Any]) -> int:
    """Write objects one per line in canonical form; returns the line count."""
    count = 0
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        for obj in objs:
            handle.write(canonical_dumps(obj))
            handle.write("\n")
            count += 1
    return count


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()
