import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import httpx
import pytest

from breachsim.gateway import (
    Cassette,
    CassetteMode,
    CassetteTransport,
    ChatMessage,
    ChatRequest,
    FunctionTransport,
    GatewayConfig,
    GatewayError,
    LiveTransport,
    complete,
    request_fingerprint,
    trim_messages,
)


def make_request(content="hello", model="test-model"):
    return ChatRequest(
        model=model,
        temperature=1.0,
        messages=(
            ChatMessage(role="system", content="You are a test agent."),
            ChatMessage(role="user", content=content),
        ),
    )


def test_request_requires_system_first():
    with pytest.raises(ValueError):
        ChatRequest(model="m", messages=(ChatMessage(role="user", content="hi"),))


def test_request_rejects_negative_temperature():
    with pytest.raises(ValueError):
        ChatRequest(
            model="m",
            temperature=-0.1,
            messages=(ChatMessage(role="system", content="s"),),
        )


def test_fingerprint_stable_and_sensitive():
    a = request_fingerprint(make_request("one"))
    b = request_fingerprint(make_request("one"))
    c = request_fingerprint(make_request("two"))
    assert a == b
    assert a != c


def test_cassette_replay_roundtrip(tmp_path):
    cassette = Cassette(mode=CassetteMode.RECORD)
    transport = CassetteTransport(cassette, inner=FunctionTransport(lambda r: "recorded reply"))
    assert transport.send(make_request()) == "recorded reply"
    path = tmp_path / "tape.json"
    cassette.save(path)

    replayed = Cassette.load(path)
    replay_transport = CassetteTransport(replayed)
    assert replay_transport.send(make_request()) == "recorded reply"


def test_cassette_mismatch_names_field(tmp_path):
    cassette = Cassette(mode=CassetteMode.RECORD)
    transport = CassetteTransport(cassette, inner=FunctionTransport(lambda r: "ok"))
    transport.send(make_request("original"))
    cassette.mode = CassetteMode.REPLAY
    cassette._cursor = 0
    replay_transport = CassetteTransport(cassette)
    with pytest.raises(GatewayError, match=r"messages\[1\].content"):
        replay_transport.send(make_request("different"))


def test_cassette_exhaustion():
    replay_transport = CassetteTransport(Cassette(mode=CassetteMode.REPLAY))
    with pytest.raises(GatewayError, match="exhausted"):
        replay_transport.send(make_request())


def test_trim_keeps_system_and_recent():
    messages = (
        ChatMessage(role="system", content="sys"),
        *(ChatMessage(role="user", content=f"m{i}") for i in range(10)),
    )
    trimmed = trim_messages(messages, keep_last=3)
    assert trimmed[0].content == "sys"
    assert [m.content for m in trimmed[1:]] == ["m7", "m8", "m9"]


def test_live_transport_requires_credential(monkeypatch):
    monkeypatch.delenv("BREACHSIM_API_KEY", raising=False)
    transport = LiveTransport(GatewayConfig(base_url="http://localhost:9"))
    with pytest.raises(GatewayError, match="credential missing"):
        transport.send(make_request())


class _StubHandler(BaseHTTPRequestHandler):
    """Minimal chat-completion endpoint: echoes the last user message."""

    def do_POST(self):
        assert self.path.endswith("/chat/completions")
        length = int(self.headers["Content-Length"])
        body = json.loads(self.rfile.read(length))
        assert body["messages"][0]["role"] == "system"
        assert body["temperature"] == 1.0
        reply = "stub saw: " + body["messages"][-1]["content"]
        payload = json.dumps({"choices": [{"message": {"role": "assistant", "content": reply}}]})
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.end_headers()
        self.wfile.write(payload.encode())

    def log_message(self, *args):
        pass


@pytest.fixture()
def stub_server():
    server = HTTPServer(("127.0.0.1", 0), _StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}"
    server.shutdown()


def test_live_request_shape_against_stub(stub_server, monkeypatch):
    monkeypatch.setenv("BREACHSIM_API_KEY", "test-key")
    config = GatewayConfig(base_url=stub_server, retry_limit=1)
    transport = LiveTransport(config, client=httpx.Client(base_url=stub_server, timeout=5.0))
    reply = complete(make_request("ping"), transport)
    assert reply == "stub saw: ping"


def test_record_through_stub_then_offline_replay(stub_server, monkeypatch, tmp_path):
    monkeypatch.setenv("BREACHSIM_API_KEY", "test-key")
    config = GatewayConfig(base_url=stub_server, retry_limit=1)
    live = LiveTransport(config, client=httpx.Client(base_url=stub_server, timeout=5.0))
    cassette = Cassette(mode=CassetteMode.RECORD)
    transport = CassetteTransport(cassette, inner=live)
    first = complete(make_request("ping"), transport)
    path = tmp_path / "session.json"
    cassette.save(path)

    # Replay must not touch the network at all.
    offline = CassetteTransport(Cassette.load(path))
    assert complete(make_request("ping"), offline) == first
