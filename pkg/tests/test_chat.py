import socket

import pytest

from hybrid_npc.chat import (
    STRICT_PREFIX, ChatBackend, ChatProtocolError, ChatRequest, ChatTransportError,
    StubChatServer, base_url, chat_completion, completion_body,
)
from hybrid_npc.goals import GroundGoalOption
from hybrid_npc.reasoner import select_goal

OPTIONS = [GroundGoalOption("A", "a", ()), GroundGoalOption("B", "b", ())]


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_request_shape():
    body = ChatRequest.for_prompt("hello").to_json()
    assert body["temperature"] == 0
    assert [m["role"] for m in body["messages"]] == ["system", "user"]
    assert body["messages"][1]["content"] == "hello"
    assert "model" not in body
    strict = ChatRequest.for_prompt("hello", strict=True, model="m").to_json()
    assert strict["messages"][0]["content"].startswith(STRICT_PREFIX)
    assert strict["model"] == "m"


def test_base_url(monkeypatch):
    assert base_url("http://h:1/v1/") == "http://h:1"
    monkeypatch.setenv("NPC_LLM_URL", "http://env:9")
    assert base_url() == "http://env:9"
    monkeypatch.delenv("NPC_LLM_URL")
    assert base_url() == "http://localhost:1234"


def test_round_trip_against_stub():
    with StubChatServer(["Therefore, I would choose option 2."]) as stub:
        backend = ChatBackend(stub.url, timeout=5)
        choice = select_goal(backend, "the prompt", OPTIONS)
        assert choice.option_index == 2
        assert backend.calls == 1
        (req,) = stub.requests
        assert req["temperature"] == 0
        assert req["messages"][1] == {"role": "user", "content": "the prompt"}


def test_raw_choices_are_exposed():
    with StubChatServer([completion_body("hi there")]) as stub:
        resp = chat_completion(stub.url, ChatRequest.for_prompt("x"), timeout=5)
        assert resp.content == "hi there"
        assert resp.choices[0]["message"]["role"] == "assistant"


@pytest.mark.parametrize("reply,match", [
    ({"id": "x"}, "no choices"),
    ({"choices": [{"message": {}}]}, "without message content"),
    (b"<html>oops", "not JSON"),
])
def test_protocol_errors(reply, match):
    with StubChatServer([reply]) as stub:
        with pytest.raises(ChatProtocolError, match=match):
            chat_completion(stub.url, ChatRequest.for_prompt("x"), timeout=5)


def test_http_error_status():
    with StubChatServer() as stub:
        with pytest.raises(ChatProtocolError, match="404"):
            chat_completion(stub.url + "/nested", ChatRequest.for_prompt("x"), timeout=5)


def test_dead_endpoint_names_url():
    url = f"http://127.0.0.1:{free_port()}"
    with pytest.raises(ChatTransportError, match="127.0.0.1"):
        chat_completion(url, ChatRequest.for_prompt("x"), timeout=1)


def test_malformed_then_good_uses_strict_retry():
    with StubChatServer(["I cannot decide.", "option 1"]) as stub:
        choice = select_goal(ChatBackend(stub.url, timeout=5), "p", OPTIONS)
        assert choice.attempts == 2 and choice.option_index == 1
        assert stub.requests[1]["messages"][0]["content"].startswith(STRICT_PREFIX)
