"""User-agent tokenization and coarse token classification.

The tokenizer favors stability over completeness: it splits a UA string
into product/version and comment tokens, strips volatile build tags and
commit hashes, and buckets each surviving token as browser, os, model,
sdk, or other. Re-tokenizing a token's own value yields the same token,
which keeps signature canonicalization idempotent.
"""

from __future__ import annotations

import re

from .records import UAToken

__all__ = ["tokenize_user_agent", "classify_token", "parse_user_agent"]

_BUILD_TAG = re.compile(r"[;,]?\s*\bbuild/[\w.\-]*", re.IGNORECASE)
_COMMIT_HASH = re.compile(r"[0-9a-f]{7,40}$", re.IGNORECASE)
_COMMENT = re.compile(r"\(([^()]*)\)")

_OS_NAMES = frozenset(
    {
        "linux", "ubuntu", "debian", "fedora", "android", "windows", "win64",
        "wow64", "ios", "ipados", "macos", "darwin", "x11", "cros", "fireos",
        "tizen", "webos", "freebsd", "openbsd", "netbsd", "tvos", "watchos",
    }
)
_OS_PREFIXES = re.compile(
    r"^(android|windows nt|windows|mac os x|macos|iphone os|cpu iphone os|"
    r"cpu os|fire os|linux|ubuntu|cros|tizen|webos)\b"
)
_SDK_NAMES = frozenset(
    {
        "okhttp", "curl", "libcurl", "wget", "python-requests", "python-urllib",
        "python", "urllib", "go-http-client", "java", "jakarta",
        "apache-httpclient", "httpclient", "cfnetwork", "alamofire", "axios",
        "node-fetch", "dalvik", "libwww-perl", "aiohttp", "grpc", "grpc-java",
        "guzzlehttp", "winhttp", "urlsession", "requests",
    }
)
_BROWSER_NAMES = frozenset(
    {
        "mozilla", "applewebkit", "webkit", "khtml", "gecko", "chrome",
        "chromium", "crios", "safari", "firefox", "fxios", "opera", "opr",
        "edge", "edg", "edga", "edgios", "msie", "trident", "silk",
        "samsungbrowser", "ucbrowser", "version", "mobile",
    }
)
_MODEL_CODE = re.compile(r"^[a-z]{1,5}-[a-z0-9][a-z0-9._+-]*$")
_MODEL_PREFIXES = re.compile(r"^(iphone|ipad|ipod|macintosh|nexus|pixel|kindle|xbox)\b")


def _strip_volatile(token: str) -> str:
    token = _BUILD_TAG.sub("", token)
    token = token.strip(" \t,;")
    token = re.sub(r"\s+", " ", token)
    if token and _COMMIT_HASH.fullmatch(token):
        return ""
    return token


def _split_segment(segment: str) -> list[str]:
    """Split a semicolon-free segment into tokens.

    Whitespace chunks containing ``/`` are standalone product/version
    tokens; runs of chunks without ``/`` stay together as one token
    (``Android 12``, ``KHTML, like Gecko``).
    """
    tokens: list[str] = []
    plain: list[str] = []
    for chunk in segment.split():
        if "/" in chunk:
            if plain:
                tokens.append(" ".join(plain))
                plain = []
            tokens.append(chunk)
        else:
            plain.append(chunk)
    if plain:
        tokens.append(" ".join(plain))
    return tokens


def tokenize_user_agent(ua: str) -> list[str]:
    """Raw token values, product tokens first then comment items, with
    volatile parts stripped and duplicates removed."""
    if not ua or not ua.strip():
        return []
    pieces: list[str] = []
    comments = [match.group(1) for match in _COMMENT.finditer(ua)]
    rest = _COMMENT.sub(" ", ua)

    for segment in rest.split(";"):
        pieces.extend(_split_segment(segment))
    for comment in comments:
        for item in comment.split(";"):
            pieces.extend(_split_segment(item))

    out: list[str] = []
    seen: set[str] = set()
    for piece in pieces:
        value = _strip_volatile(piece)
        if not value or value in seen:
            continue
        seen.add(value)
        out.append(value)
    return out


def classify_token(value: str) -> UAToken:
    lowered = value.lower()
    name = lowered.split("/", 1)[0].strip()
    if name in _OS_NAMES or _OS_PREFIXES.match(name):
        return UAToken("os", value)
    if name in _SDK_NAMES:
        return UAToken("sdk", value)
    if name in _BROWSER_NAMES or "khtml" in name or "gecko" in name:
        return UAToken("browser", value)
    if _MODEL_CODE.fullmatch(name) and any(c.isdigit() for c in name):
        return UAToken("model", value)
    if _MODEL_PREFIXES.match(name):
        return UAToken("model", value)
    return UAToken("other", value)


def parse_user_agent(ua: str | None) -> frozenset[UAToken]:
    if not ua:
        return frozenset()
    return frozenset(classify_token(value) for value in tokenize_user_agent(ua))
