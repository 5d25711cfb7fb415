"""Public suffix rules and registrable-domain extraction.

Implements the standard rule semantics: normal, wildcard (``*.``) and
exception (``!``) rules, longest match prevailing, exceptions overriding
wildcards, and the implicit ``*`` default for unlisted TLDs. Rule files
use the usual text format (``//`` comments, one rule per line, read up
to the first whitespace).

Matching is done on lowercased labels with punycode labels decoded, so
Unicode and ``xn--`` spellings of the same name resolve consistently;
the returned domain keeps the caller's spelling.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable

__all__ = [
    "PublicSuffixRules",
    "InvalidHostname",
    "HostnameIsPublicSuffix",
]


class InvalidHostname(ValueError):
    """Hostname is structurally invalid (empty label, leading dot, ...)."""


class HostnameIsPublicSuffix(ValueError):
    """Hostname is itself a public suffix; no registrable domain exists."""


def _match_label(label: str) -> str:
    label = label.lower()
    if label.startswith("xn--"):
        try:
            return label[4:].encode("ascii").decode("punycode")
        except (UnicodeError, ValueError):
            return label
    return label


def _split_hostname(hostname: str) -> list[str]:
    if not hostname:
        raise InvalidHostname("empty hostname")
    hostname = hostname.rstrip(".")
    if not hostname:
        raise InvalidHostname("hostname is only dots")
    labels = hostname.lower().split(".")
    if any(not label for label in labels):
        raise InvalidHostname(f"empty label in {hostname!r}")
    return labels


class PublicSuffixRules:
    """A parsed public suffix rule set."""

    def __init__(self, rules: Iterable[str]) -> None:
        self._exact: set[tuple[str, ...]] = set()
        self._wildcard: set[tuple[str, ...]] = set()
        self._exception: set[tuple[str, ...]] = set()
        count = 0
        for raw in rules:
            rule = raw.strip().split()[0] if raw.strip() else ""
            if not rule or rule.startswith("//"):
                continue
            count += 1
            if rule.startswith("!"):
                labels = tuple(_match_label(l) for l in rule[1:].split("."))
                self._exception.add(labels)
            elif rule.startswith("*."):
                labels = tuple(_match_label(l) for l in rule[2:].split("."))
                self._wildcard.add(labels)
            elif rule == "*":
                self._wildcard.add(())
            else:
                labels = tuple(_match_label(l) for l in rule.split("."))
                self._exact.add(labels)
        if count == 0:
            raise ValueError("rule set contains no rules")

    @classmethod
    def load(cls, path: str | Path) -> "PublicSuffixRules":
        text = Path(path).read_text(encoding="utf-8")
        return cls(text.splitlines())

    def _suffix_length(self, labels: list[str]) -> int:
        """Number of trailing labels forming the public suffix."""
        match = [_match_label(l) for l in labels]
        n = len(match)
        best = 0
        for i in range(n):
            suffix = tuple(match[i:])
            if suffix in self._exception:
                # an exception rule prevails outright; its suffix drops
                # the rule's leading label
                return len(suffix) - 1
            length = 0
            if suffix in self._exact:
                length = len(suffix)
            if len(suffix) >= 2 and suffix[1:] in self._wildcard:
                length = max(length, len(suffix))
            best = max(best, length)
        if best == 0:
            best = 1  # implicit default rule: "*"
        return best

    def public_suffix(self, hostname: str) -> str:
        labels = _split_hostname(hostname)
        return ".".join(labels[len(labels) - self._suffix_length(labels):])

    def registrable_domain(self, hostname: str) -> str:
        """Public suffix plus one label, in the caller's (lowercased) spelling.

        Raises HostnameIsPublicSuffix when the hostname has no label left
        of its public suffix.
        """
        labels = _split_hostname(hostname)
        suffix_len = self._suffix_length(labels)
        if suffix_len >= len(labels):
            raise HostnameIsPublicSuffix(hostname)
        return ".".join(labels[len(labels) - suffix_len - 1:])
