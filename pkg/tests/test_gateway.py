from __future__ import annotations

import json
import threading

import pytest

from hierplan.gateway import (
    BadStatus,
    ChatRequest,
    ChatResponse,
    GatewayTimeout,
    HttpBackend,
    Message,
    ScriptMiss,
    ScriptRule,
    ScriptedBackend,
    TraceLog,
    TransportError,
    write_script,
)

from .conftest import chat_payload


def request_for(text: str) -> ChatRequest:
    return ChatRequest(messages=(Message("user", text),))


class TestChatRequest:
    def test_needs_messages(self):
        with pytest.raises(ValueError):
            ChatRequest(messages=())

    def test_rejects_negative_temperature(self):
        with pytest.raises(ValueError):
            ChatRequest(messages=(Message("user", "x"),), temperature=-0.1)

    def test_defaults_are_greedy(self):
        request = request_for("x")
        assert request.temperature == 0.0
        assert request.stop == ()

    def test_prompt_text_joins_messages(self):
        request = ChatRequest(messages=(Message("system", "sys"), Message("user", "usr")))
        assert request.prompt_text() == "sys\n\nusr"


class TestScriptedBackend:
    def test_substring_rule_fires(self):
        backend = ScriptedBackend([ScriptRule(response="1. done()", substring="Pick up a pillow")])
        response = backend.complete(request_for("Task: Pick up a pillow from the floor"))
        assert response.content == "1. done()"

    def test_empty_rules_miss(self):
        with pytest.raises(ScriptMiss):
            ScriptedBackend([]).complete(request_for("anything"))

    def test_first_matching_rule_wins(self):
        backend = ScriptedBackend(
            [
                ScriptRule(response="first", substring="pillow"),
                ScriptRule(response="second", substring="pillow from"),
            ]
        )
        assert backend.complete(request_for("pillow from the floor")).content == "first"

    def test_hash_matcher(self):
        import hashlib

        prompt = "exact prompt"
        digest = hashlib.sha256(prompt.encode()).hexdigest()
        backend = ScriptedBackend([ScriptRule(response="hit", prompt_sha256=digest)])
        assert backend.complete(request_for(prompt)).content == "hit"
        with pytest.raises(ScriptMiss):
            backend.complete(request_for(prompt + "!"))

    def test_referentially_transparent_across_instances(self, tmp_path):
        rules = [ScriptRule(response="out", substring="in")]
        path = tmp_path / "script.json"
        write_script(rules, path)
        a = ScriptedBackend(rules)
        b = ScriptedBackend.from_file(path)
        req = request_for("going in now")
        assert a.complete(req) == b.complete(req) == ChatResponse(content="out")
        assert a.identity == b.identity

    def test_thread_safety_of_lookup(self):
        backend = ScriptedBackend([ScriptRule(response="ok", substring="x")])
        results = []

        def worker():
            results.append(backend.complete(request_for("x")).content)

        threads = [threading.Thread(target=worker) for _ in range(16)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert results == ["ok"] * 16


class TestTraceLog:
    def test_replaying_logged_requests_reproduces_the_run(self, tmp_path):
        log_path = tmp_path / "llm_log.jsonl"
        backend = ScriptedBackend(
            [ScriptRule(response="alpha", substring="a"), ScriptRule(response="beta", substring="b")],
            trace_log=TraceLog(log_path),
        )
        prompts = ["a one", "b two", "a three"]
        outputs = [backend.complete(request_for(p)).content for p in prompts]

        entries = [json.loads(line) for line in log_path.read_text().splitlines()]
        assert [e["backend"] for e in entries] == [backend.identity] * 3
        replayed = []
        for entry in entries:
            messages = tuple(Message(m["role"], m["content"]) for m in entry["request"]["messages"])
            replayed.append(backend.complete(ChatRequest(messages=messages)).content)
        assert replayed == outputs
        assert [e["response"]["content"] for e in entries] == outputs

    def test_temperature_recorded(self, tmp_path):
        log_path = tmp_path / "llm_log.jsonl"
        backend = ScriptedBackend([ScriptRule(response="y", substring="x")], trace_log=TraceLog(log_path))
        backend.complete(request_for("x"))
        entry = json.loads(log_path.read_text().splitlines()[0])
        assert entry["request"]["temperature"] == 0.0


class TestHttpBackend:
    def test_success_path(self, stub_server):
        server = stub_server(lambda path, body: (200, chat_payload("1. done()")))
        backend = HttpBackend(server.url, model="test-model", api_key="secret")
        response = backend.complete(request_for("plan please"))
        assert response.content == "1. done()"
        assert response.usage == {"prompt_tokens": 1, "completion_tokens": 1}
        sent = server.requests[0]
        assert sent["path"] == "/v1/chat/completions"
        assert sent["body"]["model"] == "test-model"
        assert sent["body"]["temperature"] == 0.0
        assert sent["body"]["messages"] == [{"role": "user", "content": "plan please"}]

    def test_retry_on_transient_status_then_success(self, stub_server):
        calls = {"n": 0}

        def respond(path, body):
            calls["n"] += 1
            if calls["n"] == 1:
                return 503, {"error": "busy"}
            return 200, chat_payload("recovered")

        server = stub_server(respond)
        backend = HttpBackend(server.url, model="m", retries=2, backoff=0.01)
        assert backend.complete(request_for("x")).content == "recovered"
        assert calls["n"] == 2

    def test_non_retryable_status_fails_immediately(self, stub_server):
        calls = {"n": 0}

        def respond(path, body):
            calls["n"] += 1
            return 404, {"error": "nope"}

        server = stub_server(respond)
        backend = HttpBackend(server.url, model="m", retries=3, backoff=0.01)
        with pytest.raises(BadStatus) as err:
            backend.complete(request_for("x"))
        assert err.value.status == 404
        assert calls["n"] == 1

    def test_exhausted_retries_raise_last_error(self, stub_server):
        server = stub_server(lambda path, body: (500, {"error": "down"}))
        backend = HttpBackend(server.url, model="m", retries=1, backoff=0.01)
        with pytest.raises(BadStatus) as err:
            backend.complete(request_for("x"))
        assert err.value.status == 500

    def test_unreachable_host_is_transport_error(self):
        backend = HttpBackend("http://127.0.0.1:9", model="m", retries=1, backoff=0.01)
        with pytest.raises(TransportError):
            backend.complete(request_for("x"))

    def test_timeout(self, stub_server):
        import time

        def respond(path, body):
            time.sleep(0.5)
            return 200, chat_payload("late")

        server = stub_server(respond)
        backend = HttpBackend(server.url, model="m", retries=0, backoff=0.01)
        with pytest.raises(GatewayTimeout):
            backend.complete(
                ChatRequest(messages=(Message("user", "x"),), timeout=0.1)
            )

    def test_malformed_payload(self, stub_server):
        server = stub_server(lambda path, body: (200, {"not": "a completion"}))
        backend = HttpBackend(server.url, model="m", retries=0)
        with pytest.raises(TransportError):
            backend.complete(request_for("x"))

    def test_stop_sequences_forwarded(self, stub_server):
        server = stub_server(lambda path, body: (200, chat_payload("ok")))
        backend = HttpBackend(server.url, model="m")
        backend.complete(ChatRequest(messages=(Message("user", "x"),), stop=("\n\n",)))
        assert server.requests[0]["body"]["stop"] == ["\n\n"]
