"""Vendor alias consolidation: brand and subsidiary names to one canonical name.

Alias maps load from two-column TSV files (``alias<TAB>canonical``) or
from a live endpoint with a local file cache. Lookups ignore case,
surrounding whitespace, and edge punctuation; unmapped vendors resolve
to themselves. The map
is transitively closed at load time, so resolution is always a single
lookup and canonical names are fixed points.
"""

from __future__ import annotations

import re
from pathlib import Path
from typing import Callable, Iterable, Mapping

from .predictors import PredictorError

__all__ = ["VendorAliasStore", "AliasCycle"]

_WS = re.compile(r"\s+")
_EDGE_PUNCT = re.compile(r"^[\W_]+|[\W_]+$")


def _key(vendor: str) -> str:
    # edge punctuation is dropped so "Google, Inc." and "Google, Inc" collide
    return _WS.sub(" ", _EDGE_PUNCT.sub("", vendor.strip())).casefold()


class AliasCycle(ValueError):
    """The alias map contains a resolution cycle."""


class VendorAliasStore:
    """Alias -> canonical vendor map with identity fallback."""

    def __init__(self, mapping: Mapping[str, str], source: str = "memory") -> None:
        raw = {_key(alias): canonical.strip() for alias, canonical in mapping.items()}
        self._map: dict[str, str] = {}
        for alias in raw:
            seen = {alias}
            target = raw[alias]
            while _key(target) in raw and _key(target) != _key(raw[_key(target)]):
                nxt = _key(target)
                if nxt in seen:
                    raise AliasCycle(f"cycle involving {alias!r}")
                seen.add(nxt)
                target = raw[nxt]
            self._map[alias] = target
        self.source = source

    @classmethod
    def from_file(cls, path: str | Path) -> "VendorAliasStore":
        mapping: dict[str, str] = {}
        for lineno, line in enumerate(
            Path(path).read_text(encoding="utf-8").splitlines(), 1
        ):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0].strip() or not parts[1].strip():
                raise ValueError(f"{path}:{lineno}: expected alias<TAB>canonical")
            mapping[parts[0].strip()] = parts[1].strip()
        return cls(mapping, source=f"file:{path}")

    @classmethod
    def from_fetcher(
        cls,
        fetcher: Callable[[str], str | None],
        vendors: Iterable[str],
        cache_path: str | Path | None = None,
    ) -> "VendorAliasStore":
        """Build a store by querying a live alias endpoint per vendor.

        Fetch failures fall back to identity for that vendor. The result
        is cached as a TSV usable later via from_file.
        """
        mapping: dict[str, str] = {}
        for vendor in sorted(set(vendors)):
            try:
                canonical = fetcher(vendor)
            except PredictorError:
                canonical = None
            if canonical and canonical.strip() and _key(canonical) != _key(vendor):
                mapping[vendor] = canonical.strip()
        if cache_path is not None:
            lines = [f"{alias}\t{canonical}" for alias, canonical in sorted(mapping.items())]
            Path(cache_path).write_text("\n".join(lines) + "\n", encoding="utf-8")
        return cls(mapping, source="live-endpoint-cache")

    def resolve(self, vendor: str) -> str:
        """Canonical name for a vendor; unmapped names pass through."""
        return self._map.get(_key(vendor), vendor)

    def __len__(self) -> int:
        return len(self._map)

    def items(self) -> list[tuple[str, str]]:
        return sorted(self._map.items())
