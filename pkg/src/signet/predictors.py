"""Prediction backends: a chat-completions HTTP client and offline stubs.

The HTTP client retries transient failures with exponential backoff and
honors an optional client-side token-bucket rate limit. Stubs answer
from a prompt-hash table or a rule callable, which keeps every test and
CLI dry-run fully offline and deterministic.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from pathlib import Path
from typing import Callable, Mapping, Protocol

import requests

__all__ = [
    "Predictor",
    "PredictorError",
    "TransportError",
    "AuthError",
    "RateLimited",
    "RateLimiter",
    "HttpPredictor",
    "StubPredictor",
    "field_echo_stub",
    "prompt_key",
    "ENV_URL",
    "ENV_KEY",
]

ENV_URL = "SIGNET_LLM_URL"
ENV_KEY = "SIGNET_LLM_KEY"


class PredictorError(Exception):
    """Base class for prediction backend failures."""


class TransportError(PredictorError):
    """Connection problems, 5xx responses, or an unusable response body."""


class AuthError(PredictorError):
    """The endpoint rejected our credentials."""


class RateLimited(PredictorError):
    """Retries exhausted while the endpoint kept throttling us."""

    def __init__(self, message: str, retry_after: float | None = None) -> None:
        super().__init__(message)
        self.retry_after = retry_after


class Predictor(Protocol):
    def query(self, prompt: str) -> str: ...


def prompt_key(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class RateLimiter:
    """Thread-safe token bucket: ``rate`` tokens/second, ``burst`` capacity."""

    def __init__(
        self,
        rate: float,
        burst: int = 1,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        if rate <= 0 or burst < 1:
            raise ValueError("rate must be positive and burst >= 1")
        self.rate = float(rate)
        self.burst = float(burst)
        self._clock = clock
        self._sleep = sleep
        self._tokens = float(burst)
        self._stamp = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(
                    self.burst, self._tokens + (now - self._stamp) * self.rate
                )
                self._stamp = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            self._sleep(wait)


def _extract_content(body: Mapping) -> str:
    choices = body.get("choices")
    if isinstance(choices, list) and choices:
        choice = choices[0]
        if isinstance(choice, Mapping):
            message = choice.get("message")
            if isinstance(message, Mapping) and isinstance(message.get("content"), str):
                return message["content"]
            if isinstance(choice.get("text"), str):
                return choice["text"]
    for key in ("completion", "content", "text"):
        if isinstance(body.get(key), str):
            return body[key]
    message = body.get("message")
    if isinstance(message, Mapping) and isinstance(message.get("content"), str):
        return message["content"]
    raise TransportError("response body has no completion content")


class HttpPredictor:
    """Chat-completions style client for one model behind one endpoint."""

    def __init__(
        self,
        endpoint: str,
        api_key: str | None = None,
        model: str = "default",
        *,
        timeout: float = 60.0,
        max_attempts: int = 4,
        backoff_base: float = 0.5,
        backoff_cap: float = 30.0,
        rate_limiter: RateLimiter | None = None,
        session: requests.Session | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        if not endpoint:
            raise ValueError("endpoint must be non-empty")
        if max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        self.endpoint = endpoint
        self.api_key = api_key
        self.model = model
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.backoff_cap = backoff_cap
        self.rate_limiter = rate_limiter
        self.session = session or requests.Session()
        self._sleep = sleep

    @classmethod
    def from_env(cls, model: str = "default", **kwargs) -> "HttpPredictor":
        endpoint = os.environ.get(ENV_URL, "").strip()
        if not endpoint:
            raise ValueError(f"{ENV_URL} is not set")
        return cls(endpoint, os.environ.get(ENV_KEY) or None, model, **kwargs)

    def _backoff(self, attempt: int) -> float:
        return min(self.backoff_cap, self.backoff_base * (2.0**attempt))

    def query(self, prompt: str) -> str:
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
        }
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"

        last: PredictorError | None = None
        for attempt in range(self.max_attempts):
            if self.rate_limiter is not None:
                self.rate_limiter.acquire()
            try:
                response = self.session.post(
                    self.endpoint, json=payload, headers=headers, timeout=self.timeout
                )
            except requests.RequestException as exc:
                last = TransportError(f"request failed: {exc}")
                self._sleep(self._backoff(attempt))
                continue

            if response.status_code in (401, 403):
                raise AuthError(f"endpoint returned {response.status_code}")
            if response.status_code == 429:
                retry_after = _parse_retry_after(response.headers.get("Retry-After"))
                last = RateLimited("endpoint throttled the request", retry_after)
                self._sleep(
                    min(self.backoff_cap, retry_after)
                    if retry_after is not None
                    else self._backoff(attempt)
                )
                continue
            if response.status_code >= 500:
                last = TransportError(f"server error {response.status_code}")
                self._sleep(self._backoff(attempt))
                continue
            if response.status_code != 200:
                raise TransportError(f"unexpected status {response.status_code}")

            try:
                body = response.json()
            except ValueError as exc:
                raise TransportError(f"response is not JSON: {exc}") from exc
            return _extract_content(body)

        assert last is not None
        raise last


def _parse_retry_after(value: str | None) -> float | None:
    if value is None:
        return None
    try:
        parsed = float(value)
    except ValueError:
        return None
    return parsed if parsed >= 0 else None


class StubPredictor:
    """Offline predictor: fixture table by prompt hash, then rules, then default.

    An unknown prompt with no default answers with an empty string, which
    downstream parsing reports as malformed.
    """

    def __init__(
        self,
        table: Mapping[str, str] | None = None,
        responder: Callable[[str], str | None] | None = None,
        default: str | None = None,
    ) -> None:
        self.table = dict(table or {})
        self.responder = responder
        self.default = default
        self.calls: list[str] = []

    @classmethod
    def from_table_file(cls, path: str | Path, **kwargs) -> "StubPredictor":
        table = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(table, dict):
            raise ValueError("stub table must be a JSON object")
        return cls(table=table, **kwargs)

    def query(self, prompt: str) -> str:
        self.calls.append(prompt)
        hit = self.table.get(prompt_key(prompt))
        if hit is not None:
            return hit
        if self.responder is not None:
            answer = self.responder(prompt)
            if answer is not None:
                return answer
        if self.default is not None:
            return self.default
        return ""


def field_echo_stub(
    field_label: str = "OUI",
    vendor_default: str = "Unknown",
    type_default: str = "Device",
) -> StubPredictor:
    """Rule stub that reads the vendor straight off one prompt field line.

    Useful as a deterministic oracle: predictions depend on exactly one
    field, so ablating that field collapses accuracy to the default rate
    while ablating any other field changes nothing.
    """
    pattern = re.compile(rf"^{re.escape(field_label)}: (.+)$", re.MULTILINE)

    def responder(prompt: str) -> str:
        match = pattern.search(prompt)
        vendor = match.group(1).strip() if match else vendor_default
        return (
            f"Explanation: The {field_label} field names the vendor directly.\n\n"
            f"Device Type: {type_default}, Vendor: {vendor}"
        )

    return StubPredictor(responder=responder)
