"""Uniform chat-completion interface: a standard HTTP backend for real models
and a deterministic scripted backend for offline runs."""

from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import requests

RETRYABLE_STATUSES = (429, 500, 502, 503, 504)


class GatewayError(Exception):
    pass


class GatewayTimeout(GatewayError):
    pass


class TransportError(GatewayError):
    pass


class BadStatus(GatewayError):
    def __init__(self, status: int, body: str):
        super().__init__(f"HTTP {status}: {body[:200]}")
        self.status = status
        self.body = body


class ScriptMiss(GatewayError):
    pass


@dataclass(frozen=True)
class Message:
    role: str
    content: str


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[Message, ...]
    model: str = "default"
    temperature: float = 0.0
    max_tokens: int = 512
    stop: tuple[str, ...] = ()
    timeout: float = 60.0

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("ChatRequest needs at least one message")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    def prompt_text(self) -> str:
        """The flattened text the scripted backend matches against."""
        return "\n\n".join(m.content for m in self.messages)


@dataclass(frozen=True)
class ChatResponse:
    content: str
    finish_reason: str = "stop"
    latency: float = 0.0
    usage: dict | None = None


class TraceLog:
    """Append-only JSONL log of request/response pairs; appends are serialized."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def append(self, backend: str, request: ChatRequest, response: ChatResponse | None, error: str | None = None) -> None:
        entry = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "backend": backend,
            "request": {
                "model": request.model,
                "temperature": request.temperature,
                "max_tokens": request.max_tokens,
                "stop": list(request.stop),
                "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            },
            "response": None if response is None else {"content": response.content, "finish_reason": response.finish_reason},
            "error": error,
        }
        line = json.dumps(entry, sort_keys=True, ensure_ascii=False)
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")


class HttpBackend:
    """Client for the de-facto standard POST {base_url}/v1/chat/completions protocol."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        retries: int = 2,
        backoff: float = 0.5,
        trace_log: TraceLog | None = None,
        session: requests.Session | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.retries = retries
        self.backoff = backoff
        self.trace_log = trace_log
        self.session = session or requests.Session()

    @property
    def identity(self) -> str:
        return f"http:{self.base_url}:{self.model}"

    def complete(self, request: ChatRequest) -> ChatResponse:
        payload = {
            "model": request.model if request.model != "default" else self.model,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        if request.stop:
            payload["stop"] = list(request.stop)
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"

        url = f"{self.base_url}/v1/chat/completions"
        last_error: GatewayError | None = None
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            start = time.monotonic()
            try:
                raw = self.session.post(url, json=payload, headers=headers, timeout=request.timeout)
            except requests.Timeout as exc:
                last_error = GatewayTimeout(str(exc))
                continue
            except requests.RequestException as exc:
                last_error = TransportError(str(exc))
                continue
            if raw.status_code in RETRYABLE_STATUSES:
                last_error = BadStatus(raw.status_code, raw.text)
                continue
            if raw.status_code != 200:
                error = BadStatus(raw.status_code, raw.text)
                self._log(request, None, str(error))
                raise error
            try:
                data = raw.json()
                choice = data["choices"][0]
                response = ChatResponse(
                    content=choice["message"]["content"],
                    finish_reason=choice.get("finish_reason", "stop"),
                    latency=time.monotonic() - start,
                    usage=data.get("usage"),
                )
            except (ValueError, KeyError, IndexError) as exc:
                error = TransportError(f"malformed completion payload: {exc}")
                self._log(request, None, str(error))
                raise error from exc
            self._log(request, response, None)
            return response

        self._log(request, None, str(last_error))
        raise last_error

    def _log(self, request: ChatRequest, response: ChatResponse | None, error: str | None) -> None:
        if self.trace_log is not None:
            self.trace_log.append(self.identity, request, response, error)


@dataclass(frozen=True)
class ScriptRule:
    """Canned completion fired when its matcher hits the flattened prompt."""

    response: str
    substring: str | None = None
    prompt_sha256: str | None = None

    def matches(self, prompt: str) -> bool:
        if self.substring is not None:
            return self.substring in prompt
        if self.prompt_sha256 is not None:
            return hashlib.sha256(prompt.encode("utf-8")).hexdigest() == self.prompt_sha256
        return False


class ScriptedBackend:
    """Deterministic rule-lookup backend; the first matching rule wins."""

    def __init__(self, rules: list[ScriptRule] | tuple[ScriptRule, ...], trace_log: TraceLog | None = None):
        self.rules = tuple(rules)
        self.trace_log = trace_log
        canon = json.dumps(
            [{"substring": r.substring, "prompt_sha256": r.prompt_sha256, "response": r.response} for r in self.rules],
            sort_keys=True,
        )
        self._digest = hashlib.sha256(canon.encode("utf-8")).hexdigest()

    @property
    def identity(self) -> str:
        return f"scripted:{self._digest[:16]}"

    @classmethod
    def from_file(cls, path: str | Path, trace_log: TraceLog | None = None) -> "ScriptedBackend":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        rules = [
            ScriptRule(
                response=entry["response"],
                substring=entry.get("substring"),
                prompt_sha256=entry.get("prompt_sha256"),
            )
            for entry in doc["rules"]
        ]
        return cls(rules, trace_log=trace_log)

    def complete(self, request: ChatRequest) -> ChatResponse:
        prompt = request.prompt_text()
        for rule in self.rules:
            if rule.matches(prompt):
                response = ChatResponse(content=rule.response)
                if self.trace_log is not None:
                    self.trace_log.append(self.identity, request, response, None)
                return response
        if self.trace_log is not None:
            self.trace_log.append(self.identity, request, None, "ScriptMiss")
        raise ScriptMiss(f"no rule matches prompt ending with {prompt[-120:]!r}")


def write_script(rules: list[ScriptRule], path: str | Path) -> None:
    doc = {
        "rules": [
            {k: v for k, v in
             {"substring": r.substring, "prompt_sha256": r.prompt_sha256, "response": r.response}.items()
             if v is not None}
            for r in rules
        ]
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")
