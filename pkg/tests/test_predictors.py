from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from signet.predictors import (
    AuthError,
    ENV_KEY,
    ENV_URL,
    HttpPredictor,
    RateLimited,
    RateLimiter,
    StubPredictor,
    TransportError,
    field_echo_stub,
    prompt_key,
)


class _ScriptedHandler(BaseHTTPRequestHandler):
    """Serves a scripted sequence of (status, headers, body) responses."""

    script: list[tuple[int, dict, bytes]] = []
    requests_seen: list[dict] = []

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        payload = json.loads(self.rfile.read(length)) if length else {}
        type(self).requests_seen.append(
            {"payload": payload, "auth": self.headers.get("Authorization")}
        )
        if type(self).script:
            status, headers, body = type(self).script.pop(0)
        else:
            status, headers, body = 200, {}, json.dumps(
                {"choices": [{"message": {"content": "ok"}}]}
            ).encode()
        self.send_response(status)
        for key, value in headers.items():
            self.send_header(key, value)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture()
def server():
    httpd = HTTPServer(("127.0.0.1", 0), _ScriptedHandler)
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    _ScriptedHandler.script = []
    _ScriptedHandler.requests_seen = []
    yield f"http://127.0.0.1:{httpd.server_port}/v1/chat"
    httpd.shutdown()
    thread.join(timeout=5)


def _chat_body(content: str) -> bytes:
    return json.dumps({"choices": [{"message": {"content": content}}]}).encode()


def _predictor(endpoint: str, **kwargs) -> HttpPredictor:
    kwargs.setdefault("sleep", lambda s: None)
    return HttpPredictor(endpoint, api_key="sk-test", model="m1", **kwargs)


def test_happy_path_payload_and_auth(server):
    _ScriptedHandler.script = [(200, {}, _chat_body("Vendor: Nest"))]
    got = _predictor(server).query("who made this?")
    assert got == "Vendor: Nest"
    seen = _ScriptedHandler.requests_seen[0]
    assert seen["auth"] == "Bearer sk-test"
    assert seen["payload"]["model"] == "m1"
    assert seen["payload"]["messages"] == [{"role": "user", "content": "who made this?"}]


def test_retries_5xx_then_succeeds(server):
    _ScriptedHandler.script = [
        (500, {}, b"boom"),
        (503, {}, b"boom"),
        (200, {}, _chat_body("fine")),
    ]
    slept = []
    got = _predictor(server, sleep=slept.append).query("p")
    assert got == "fine"
    assert len(slept) == 2
    assert slept[0] < slept[1]  # exponential backoff


def test_429_respects_retry_after(server):
    _ScriptedHandler.script = [
        (429, {"Retry-After": "3.5"}, b""),
        (200, {}, _chat_body("fine")),
    ]
    slept = []
    got = _predictor(server, sleep=slept.append).query("p")
    assert got == "fine"
    assert slept == [3.5]


def test_exhaustion_raises_last_error(server):
    _ScriptedHandler.script = [(429, {}, b"")] * 3
    with pytest.raises(RateLimited):
        _predictor(server, max_attempts=3).query("p")
    assert len(_ScriptedHandler.requests_seen) == 3


def test_auth_error_is_immediate(server):
    _ScriptedHandler.script = [(401, {}, b"")]
    with pytest.raises(AuthError):
        _predictor(server, max_attempts=4).query("p")
    assert len(_ScriptedHandler.requests_seen) == 1


def test_unexpected_status_is_immediate(server):
    _ScriptedHandler.script = [(418, {}, b"")]
    with pytest.raises(TransportError):
        _predictor(server, max_attempts=4).query("p")
    assert len(_ScriptedHandler.requests_seen) == 1


def test_non_json_body_raises(server):
    _ScriptedHandler.script = [(200, {}, b"<html>not json</html>")]
    with pytest.raises(TransportError):
        _predictor(server).query("p")


def test_alternate_body_shapes(server):
    for body in (
        {"choices": [{"text": "alt"}]},
        {"completion": "alt"},
        {"content": "alt"},
        {"text": "alt"},
        {"message": {"content": "alt"}},
    ):
        _ScriptedHandler.script = [(200, {}, json.dumps(body).encode())]
        assert _predictor(server).query("p") == "alt"


def test_connection_refused_retries_then_raises():
    # nothing listens on this port
    predictor = _predictor("http://127.0.0.1:9/v1/chat", max_attempts=2)
    with pytest.raises(TransportError):
        predictor.query("p")


def test_from_env(monkeypatch, server):
    monkeypatch.setenv(ENV_URL, server)
    monkeypatch.setenv(ENV_KEY, "sk-env")
    _ScriptedHandler.script = [(200, {}, _chat_body("ok"))]
    predictor = HttpPredictor.from_env(model="m2", sleep=lambda s: None)
    assert predictor.query("p") == "ok"
    assert _ScriptedHandler.requests_seen[0]["auth"] == "Bearer sk-env"

    monkeypatch.delenv(ENV_URL)
    with pytest.raises(ValueError):
        HttpPredictor.from_env()


def test_rate_limiter_spacing():
    clock_now = [0.0]
    sleeps = []

    def clock():
        return clock_now[0]

    def sleep(seconds):
        sleeps.append(seconds)
        clock_now[0] += seconds

    limiter = RateLimiter(rate=2.0, burst=1, clock=clock, sleep=sleep)
    for _ in range(3):
        limiter.acquire()
    # first token is free, the next two each wait half a second
    assert sleeps == pytest.approx([0.5, 0.5])


def test_rate_limiter_burst_capacity():
    limiter = RateLimiter(rate=1.0, burst=3, clock=lambda: 0.0, sleep=lambda s: None)
    sleeps = []
    limiter._sleep = sleeps.append
    limiter.acquire()
    limiter.acquire()
    limiter.acquire()
    assert sleeps == []


def test_rate_limiter_validation():
    with pytest.raises(ValueError):
        RateLimiter(rate=0.0)
    with pytest.raises(ValueError):
        RateLimiter(rate=1.0, burst=0)


def test_stub_lookup_precedence():
    prompt = "OUI: Acme\nTalks to Ads: False"
    stub = StubPredictor(
        table={prompt_key(prompt): "Vendor: FromTable"},
        responder=lambda p: "Vendor: FromRule" if "Acme" in p else None,
        default="Vendor: Default",
    )
    assert stub.query(prompt) == "Vendor: FromTable"
    assert stub.query("OUI: Acme") == "Vendor: FromRule"
    assert stub.query("something else") == "Vendor: Default"
    assert StubPredictor().query("anything") == ""
    assert stub.calls[0] == prompt


def test_stub_from_table_file(tmp_path):
    path = tmp_path / "table.json"
    path.write_text(json.dumps({prompt_key("p"): "Vendor: X"}), encoding="utf-8")
    stub = StubPredictor.from_table_file(path)
    assert stub.query("p") == "Vendor: X"
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2]", encoding="utf-8")
    with pytest.raises(ValueError):
        StubPredictor.from_table_file(bad)


def test_field_echo_stub_reads_one_field():
    stub = field_echo_stub("OUI", vendor_default="Unknown")
    answer = stub.query("OUI: Wyze Labs Inc.\nDHCP Hostname: cam")
    assert "Vendor: Wyze Labs Inc." in answer
    assert "Explanation:" in answer
    assert "Vendor: Unknown" in stub.query("DHCP Hostname: cam")
