"""Chat client contract: caching, retries, scripting, and request hashing."""

from __future__ import annotations

import pytest

from detailscribe.clients import (
    ChatRequest,
    ClientError,
    HttpChatClient,
    ImagePart,
    Message,
    RateLimited,
    ScriptedChatClient,
    ScriptExhausted,
    TextPart,
    Timeout,
    request_hash,
    text_message,
)


class CountingTransport:
    """Scripted HTTP transport double; counts calls."""

    def __init__(self, outcomes=None):
        # outcomes: list of (status, body) or "timeout"
        self.outcomes = list(outcomes or [])
        self.calls = 0

    def __call__(self, url, headers, payload, timeout):
        self.calls += 1
        if self.outcomes:
            outcome = self.outcomes.pop(0)
        else:
            outcome = (200, {"choices": [{"message": {"content": "ok"}}], "usage": {"total_tokens": 3}})
        if outcome == "timeout":
            raise TimeoutError("simulated timeout")
        return outcome


def _request(text="hello", temperature=0.0):
    return ChatRequest(messages=(text_message("user", text),), temperature=temperature, model_id="m")


def _image_request():
    return ChatRequest(
        messages=(
            Message(role="user", parts=(TextPart("look"), ImagePart("image/png", b"png-bytes"))),
        ),
        model_id="m",
    )


def test_http_client_returns_text_and_usage():
    transport = CountingTransport()
    client = HttpChatClient("http://example/chat", transport=transport, sleeper=lambda s: None)
    response = client.complete(_request())
    assert response.text == "ok"
    assert response.usage == {"total_tokens": 3}
    assert transport.calls == 1


def test_cache_hit_avoids_network(tmp_path):
    transport = CountingTransport()
    client = HttpChatClient(
        "http://example/chat", cache_dir=tmp_path, transport=transport, sleeper=lambda s: None
    )
    first = client.complete(_request())
    second = client.complete(_request())
    assert transport.calls == 1
    assert second.text == first.text
    assert second.cached


def test_cache_shared_across_client_instances(tmp_path):
    transport_a = CountingTransport()
    HttpChatClient("http://e/c", cache_dir=tmp_path, transport=transport_a).complete(_request())
    transport_b = CountingTransport()
    client_b = HttpChatClient("http://e/c", cache_dir=tmp_path, transport=transport_b)
    client_b.complete(_request())
    assert transport_b.calls == 0


def test_retry_on_429_then_success():
    transport = CountingTransport(
        [(429, {}), (200, {"choices": [{"message": {"content": "done"}}]})]
    )
    client = HttpChatClient("http://e/c", transport=transport, sleeper=lambda s: None)
    assert client.complete(_request()).text == "done"
    assert transport.calls == 2


def test_persistent_429_surfaces_rate_limited():
    transport = CountingTransport([(429, {})] * 10)
    client = HttpChatClient("http://e/c", transport=transport, max_retries=2, sleeper=lambda s: None)
    with pytest.raises(RateLimited):
        client.complete(_request())
    assert transport.calls == 3


def test_persistent_timeout_surfaces_timeout():
    transport = CountingTransport(["timeout"] * 10)
    client = HttpChatClient("http://e/c", transport=transport, max_retries=1, sleeper=lambda s: None)
    with pytest.raises(Timeout):
        client.complete(_request())


def test_client_error_on_4xx_is_not_retried():
    transport = CountingTransport([(400, {"error": "bad"})])
    client = HttpChatClient("http://e/c", transport=transport, sleeper=lambda s: None)
    with pytest.raises(ClientError):
        client.complete(_request())
    assert transport.calls == 1


def test_server_errors_retry_then_fail():
    transport = CountingTransport([(500, "boom")] * 10)
    client = HttpChatClient("http://e/c", transport=transport, max_retries=2, sleeper=lambda s: None)
    with pytest.raises(ClientError):
        client.complete(_request())
    assert transport.calls == 3


def test_text_only_http_client_rejects_images():
    client = HttpChatClient("http://e/c", transport=CountingTransport(), multimodal=False)
    with pytest.raises(ClientError):
        client.complete(_image_request())


def test_scripted_fifo_order():
    client = ScriptedChatClient(["first", "second"])
    assert client.complete(_request("a")).text == "first"
    assert client.complete(_request("b")).text == "second"


def test_scripted_exhaustion():
    client = ScriptedChatClient(["only one", "two"])
    client.complete(_request())
    client.complete(_request())
    with pytest.raises(ScriptExhausted):
        client.complete(_request())


def test_scripted_records_requests():
    client = ScriptedChatClient(["x"])
    request = _request("remember me")
    client.complete(request)
    assert client.requests == [request]


def test_scripted_text_only_rejects_image_parts():
    client = ScriptedChatClient(["x"], multimodal=False)
    with pytest.raises(ClientError):
        client.complete(_image_request())


def test_hash_keyed_script_answers_repeated_requests():
    request = _request("stable")
    client = ScriptedChatClient({request_hash(request): "pinned"})
    assert client.complete(request).text == "pinned"
    assert client.complete(request).text == "pinned"
    with pytest.raises(ScriptExhausted):
        client.complete(_request("different"))


def test_request_hash_stable_under_reconstruction():
    a = ChatRequest(
        messages=(
            Message(role="user", parts=(TextPart("hi"), ImagePart("image/png", b"data"))),
        ),
        temperature=0.5,
        model_id="m",
    )
    b = ChatRequest(
        messages=(
            Message(role="user", parts=(TextPart("hi"), ImagePart("image/png", b"data"))),
        ),
        temperature=0.5,
        model_id="m",
    )
    assert request_hash(a) == request_hash(b)


def test_request_hash_sensitive_to_content():
    base = _request("hi")
    assert request_hash(base) != request_hash(_request("hi!"))
    assert request_hash(base) != request_hash(_request("hi", temperature=1.0))


def test_request_validation():
    with pytest.raises(ClientError):
        ChatRequest(messages=())
    with pytest.raises(ClientError):
        ChatRequest(messages=(text_message("user", "x"),), temperature=-1.0)
    with pytest.raises(ClientError):
        ChatRequest(messages=(text_message("user", "x"),), max_tokens=0)


def test_image_payload_is_base64_inline():
    captured = {}

    def transport(url, headers, payload, timeout):
        captured.update(payload)
        return 200, {"choices": [{"message": {"content": "ok"}}]}

    client = HttpChatClient("http://e/c", transport=transport)
    client.complete(_image_request())
    content = captured["messages"][0]["content"]
    kinds = [part["type"] for part in content]
    assert kinds == ["text", "image_url"]
    assert content[1]["image_url"]["url"].startswith("data:image/png;base64,")
