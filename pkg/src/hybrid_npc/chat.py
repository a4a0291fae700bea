"""OpenAI-compatible chat-completions client and a local stub server."""
from __future__ import annotations

import json
import os
import socket
import threading
import urllib.error
import urllib.request
from collections import deque
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Optional, Sequence, Union

from .reasoner import BackendError

DEFAULT_URL = "http://localhost:1234"
URL_ENV = "NPC_LLM_URL"

SYSTEM_MESSAGE = ("You are the decision maker of a character in a simulation. "
                  "Read the situation and choose one of the numbered options.")
STRICT_PREFIX = "You must respect the format. Answer with the number of the chosen option. "


class ChatProtocolError(BackendError):
    pass


class ChatTransportError(BackendError):
    pass


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[tuple[str, str], ...]
    temperature: float = 0.0
    model: Optional[str] = None

    @classmethod
    def for_prompt(cls, prompt: str, strict: bool = False, model: Optional[str] = None,
                   system: str = SYSTEM_MESSAGE) -> "ChatRequest":
        if strict:
            system = STRICT_PREFIX + system
        return cls((("system", system), ("user", prompt)), 0.0, model)

    def to_json(self) -> dict:
        body: dict = {
            "messages": [{"role": r, "content": c} for r, c in self.messages],
            "temperature": self.temperature,
        }
        if self.model:
            body["model"] = self.model
        return body


@dataclass(frozen=True)
class ChatResponse:
    choices: tuple[dict, ...]
    raw: dict = field(default_factory=dict)

    @property
    def content(self) -> str:
        return self.choices[0]["message"]["content"]


def base_url(url: Optional[str] = None) -> str:
    url = (url or os.environ.get(URL_ENV) or DEFAULT_URL).rstrip("/")
    return url[:-3] if url.endswith("/v1") else url


def chat_completion(endpoint: str, request: ChatRequest, timeout: float = 30.0,
                    api_key: Optional[str] = None) -> ChatResponse:
    url = base_url(endpoint) + "/v1/chat/completions"
    data = json.dumps(request.to_json()).encode("utf-8")
    req = urllib.request.Request(url, data=data, method="POST",
                                 headers={"Content-Type": "application/json"})
    if api_key:
        req.add_header("Authorization", f"Bearer {api_key}")
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            payload = resp.read()
    except urllib.error.HTTPError as exc:
        raise ChatProtocolError(f"{url} answered HTTP {exc.code}") from None
    except (urllib.error.URLError, socket.timeout, ConnectionError, OSError) as exc:
        reason = getattr(exc, "reason", exc)
        raise ChatTransportError(f"cannot reach {url}: {reason}") from None
    try:
        body = json.loads(payload)
    except (json.JSONDecodeError, UnicodeDecodeError):
        raise ChatProtocolError(f"{url} returned a body that is not JSON") from None
    choices = body.get("choices") if isinstance(body, dict) else None
    if not isinstance(choices, list) or not choices:
        raise ChatProtocolError(f"{url} returned no choices")
    first = choices[0]
    if not (isinstance(first, dict) and isinstance(first.get("message"), dict)
            and isinstance(first["message"].get("content"), str)):
        raise ChatProtocolError(f"{url} returned a choice without message content")
    return ChatResponse(tuple(choices), body)


class ChatBackend:
    """Reasoning backend backed by a chat-completions endpoint (LM Studio style)."""

    def __init__(self, url: Optional[str] = None, timeout: float = 30.0,
                 model: Optional[str] = None, api_key: Optional[str] = None):
        self.url = base_url(url)
        self.timeout = timeout
        self.model = model
        self.api_key = api_key
        self.calls = 0

    def __call__(self, prompt, options, strict=False) -> str:
        self.calls += 1
        request = ChatRequest.for_prompt(prompt, strict=strict, model=self.model)
        return chat_completion(self.url, request, self.timeout, self.api_key).content


# --------------------------------------------------------------------------
# stub server

Reply = Union[str, dict, Callable[[dict], Union[str, dict]]]


class StubChatServer:
    """Minimal chat-completions server for tests and offline runs.

    Replies are taken from a queue (one per request) and fall back to
    ``default``.  A ``str`` reply becomes the message content, a ``dict`` is
    sent verbatim as the JSON body, ``bytes`` are sent raw, and a callable
    receives the request body and returns either.  Every request body is
    recorded in ``requests``.
    """

    def __init__(self, replies: Sequence[Reply] = (), default: Reply = "I would choose option 1.",
                 host: str = "127.0.0.1", port: int = 0):
        self.replies: deque = deque(replies)
        self.default = default
        self.requests: list[dict] = []
        self._lock = threading.Lock()
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_POST(self):
                if self.path.rstrip("/") != "/v1/chat/completions":
                    self.send_error(404)
                    return
                length = int(self.headers.get("Content-Length") or 0)
                try:
                    body = json.loads(self.rfile.read(length) or b"{}")
                except json.JSONDecodeError:
                    self.send_error(400)
                    return
                with stub._lock:
                    stub.requests.append(body)
                    reply = stub.replies.popleft() if stub.replies else stub.default
                if callable(reply):
                    reply = reply(body)
                if isinstance(reply, bytes):
                    payload = reply
                elif isinstance(reply, dict):
                    payload = json.dumps(reply).encode()
                else:
                    payload = json.dumps(completion_body(str(reply), body.get("model"))).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

        self.server = ThreadingHTTPServer((host, port), Handler)
        self.server.daemon_threads = True
        self._thread: Optional[threading.Thread] = None

    @property
    def url(self) -> str:
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "StubChatServer":
        self._thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self.server.shutdown()
        self.server.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


def completion_body(content: str, model: Optional[str] = None) -> dict:
    return {
        "id": "chatcmpl-stub",
        "object": "chat.completion",
        "model": model or "stub",
        "choices": [{"index": 0, "finish_reason": "stop",
                     "message": {"role": "assistant", "content": content}}],
    }
