import json
import logging

import pytest
import requests

from rag3d.gateway import (
    ChatMessage,
    ChatRequest,
    EmptyResponse,
    Gateway,
    MissingCredentials,
    MockBackend,
    ProviderConfig,
    ProviderError,
    RetriesExhausted,
    Timeout,
    UnknownProvider,
    default_registry,
    extract_code_block,
    load_registry,
)


def req(provider_id="mock", content="make a cube"):
    return ChatRequest(
        messages=(ChatMessage("system", "you write scripts"), ChatMessage("user", content)),
        provider_id=provider_id,
    )


class FakeResponse:
    def __init__(self, status_code=200, payload=None, text=""):
        self.status_code = status_code
        self._payload = payload
        self.text = text or (json.dumps(payload) if payload else "")

    def json(self):
        if self._payload is None:
            raise ValueError("not json")
        return self._payload


class TestMockProvider:
    def test_fixed_text_round_trip(self):
        gateway = Gateway(default_registry(), mock_backends={"mock": MockBackend(responses=["ok"])})
        assert gateway.complete(req()).content == "ok"

    def test_unknown_provider(self):
        gateway = Gateway(default_registry())
        with pytest.raises(UnknownProvider):
            gateway.complete(req(provider_id="nope"))

    def test_fail_twice_then_succeed(self):
        backend = MockBackend(responses=[RuntimeError("t1"), RuntimeError("t2"), "third time"])
        registry = {"mock": ProviderConfig(provider_id="mock", adapter="mock", max_retries=2)}
        gateway = Gateway(registry, mock_backends={"mock": backend}, sleep=lambda s: None)
        response = gateway.complete(req())
        assert response.content == "third time"
        assert len(backend.calls) == 3  # attempt count observable

    def test_retries_exhausted(self):
        backend = MockBackend(responses=[RuntimeError("a"), RuntimeError("b"), RuntimeError("c")])
        registry = {"mock": ProviderConfig(provider_id="mock", adapter="mock", max_retries=2)}
        gateway = Gateway(registry, mock_backends={"mock": backend}, sleep=lambda s: None)
        with pytest.raises(RetriesExhausted):
            gateway.complete(req())

    def test_default_mock_returns_valid_script(self):
        gateway = Gateway(default_registry())
        content = gateway.complete(req()).content
        assert "import bpy" in content

    def test_latency_recorded(self):
        gateway = Gateway(default_registry())
        assert gateway.complete(req()).latency >= 0.0


class TestHttpProviders:
    def _registry(self, adapter, **kwargs):
        return {
            "remote": ProviderConfig(
                provider_id="remote",
                adapter=adapter,
                endpoint="http://llm.local/v1",
                model_name="m-1",
                api_key_env="TEST_LLM_KEY",
                max_retries=kwargs.pop("max_retries", 2),
                **kwargs,
            )
        }

    def test_missing_credentials_before_network(self, monkeypatch):
        monkeypatch.delenv("TEST_LLM_KEY", raising=False)
        called = {"n": 0}

        def transport(*args, **kwargs):
            called["n"] += 1
            return FakeResponse()

        gateway = Gateway(self._registry("openai_chat"), transport=transport)
        with pytest.raises(MissingCredentials):
            gateway.complete(req("remote"))
        assert called["n"] == 0

    def test_openai_wire_shape(self, monkeypatch):
        monkeypatch.setenv("TEST_LLM_KEY", "sk-abc")
        captured = {}

        def transport(url, json=None, headers=None, timeout=None):
            captured.update(url=url, body=json, headers=headers, timeout=timeout)
            return FakeResponse(payload={"choices": [{"message": {"content": "script here"}}]})

        gateway = Gateway(self._registry("openai_chat"), transport=transport)
        response = gateway.complete(req("remote"))
        assert response.content == "script here"
        assert captured["url"] == "http://llm.local/v1"
        assert captured["headers"]["Authorization"] == "Bearer sk-abc"
        assert captured["body"]["model"] == "m-1"
        assert captured["body"]["messages"][0] == {"role": "system", "content": "you write scripts"}

    def test_anthropic_wire_shape(self, monkeypatch):
        monkeypatch.setenv("TEST_LLM_KEY", "sk-abc")
        captured = {}

        def transport(url, json=None, headers=None, timeout=None):
            captured.update(body=json, headers=headers)
            return FakeResponse(payload={"content": [{"type": "text", "text": "anthro says hi"}]})

        gateway = Gateway(self._registry("anthropic"), transport=transport)
        assert gateway.complete(req("remote")).content == "anthro says hi"
        assert captured["headers"]["x-api-key"] == "sk-abc"
        assert captured["body"]["system"] == "you write scripts"
        assert all(m["role"] != "system" for m in captured["body"]["messages"])

    def test_gemini_wire_shape(self, monkeypatch):
        monkeypatch.setenv("TEST_LLM_KEY", "sk-abc")
        captured = {}

        def transport(url, json=None, headers=None, timeout=None):
            captured.update(body=json, headers=headers)
            return FakeResponse(
                payload={"candidates": [{"content": {"parts": [{"text": "gem"}, {"text": "ini"}]}}]}
            )

        gateway = Gateway(self._registry("gemini"), transport=transport)
        assert gateway.complete(req("remote")).content == "gemini"
        assert captured["headers"]["x-goog-api-key"] == "sk-abc"
        assert captured["body"]["systemInstruction"]["parts"][0]["text"] == "you write scripts"

    def test_truncation_flag_from_finish_reason(self, monkeypatch):
        monkeypatch.setenv("TEST_LLM_KEY", "sk-abc")

        def transport(*args, **kwargs):
            return FakeResponse(
                payload={"choices": [{"message": {"content": "partial"}, "finish_reason": "length"}]}
            )

        gateway = Gateway(self._registry("openai_chat"), transport=transport)
        response = gateway.complete(req("remote"))
        assert response.truncated is True

    def test_retry_on_5xx_then_success(self, monkeypatch):
        monkeypatch.setenv("TEST_LLM_KEY", "sk-abc")
        responses = [
            FakeResponse(status_code=500, text="oops"),
            FakeResponse(status_code=429, text="slow down"),
            FakeResponse(payload={"choices": [{"message": {"content": "done"}}]}),
        ]
        gateway = Gateway(self._registry("openai_chat"), transport=lambda *a, **kw: responses.pop(0), sleep=lambda s: None)
        assert gateway.complete(req("remote")).content == "done"

    def test_4xx_is_provider_error_no_retry(self, monkeypatch):
        monkeypatch.setenv("TEST_LLM_KEY", "sk-abc")
        calls = {"n": 0}

        def transport(*args, **kwargs):
            calls["n"] += 1
            return FakeResponse(status_code=403, text="forbidden")

        gateway = Gateway(self._registry("openai_chat"), transport=transport, sleep=lambda s: None)
        with pytest.raises(ProviderError) as excinfo:
            gateway.complete(req("remote"))
        assert excinfo.value.status == 403
        assert calls["n"] == 1

    def test_timeout_after_retries(self, monkeypatch):
        monkeypatch.setenv("TEST_LLM_KEY", "sk-abc")
        calls = {"n": 0}

        def transport(*args, **kwargs):
            calls["n"] += 1
            raise requests.Timeout("deadline")

        gateway = Gateway(self._registry("openai_chat"), transport=transport, sleep=lambda s: None)
        with pytest.raises(Timeout):
            gateway.complete(req("remote"))
        assert calls["n"] == 3  # max_retries=2 -> 3 attempts

    def test_never_blocks_past_budget(self, monkeypatch):
        # timeout * (max_retries + 1) + backoff sum bounds total sleep+wait.
        monkeypatch.setenv("TEST_LLM_KEY", "sk-abc")
        slept = []

        def transport(*args, **kwargs):
            raise requests.Timeout("deadline")

        gateway = Gateway(
            self._registry("openai_chat", timeout=1.0),
            transport=transport,
            sleep=lambda s: slept.append(s),
            backoff_base=0.5,
        )
        with pytest.raises(Timeout):
            gateway.complete(req("remote"))
        assert sum(slept) <= 0.5 + 1.0  # backoff sum for 2 retries at base 0.5

    def test_credentials_never_logged(self, monkeypatch, caplog):
        monkeypatch.setenv("TEST_LLM_KEY", "sk-supersecret")

        def transport(*args, **kwargs):
            raise requests.ConnectionError("refused talking to http://llm.local with key sk-supersecret")

        gateway = Gateway(self._registry("openai_chat"), transport=transport, sleep=lambda s: None)
        with caplog.at_level(logging.DEBUG, logger="rag3d.gateway"):
            with pytest.raises(RetriesExhausted) as excinfo:
                gateway.complete(req("remote"))
        assert "sk-supersecret" not in str(excinfo.value)
        for record in caplog.records:
            assert "sk-supersecret" not in record.getMessage()


class TestExtractCodeBlock:
    def test_single_fence(self):
        assert extract_code_block("here:\n```python\nx=1\n```") == "x=1"

    def test_two_fences_concatenated(self):
        text = "intro\n```python\na=1\n```\nmiddle\n```\nb=2\n```\nend"
        assert extract_code_block(text) == "a=1\nb=2"

    def test_no_fence_returns_whole_trimmed(self):
        assert extract_code_block("  import bpy  \n") == "import bpy"

    def test_idempotent(self):
        extracted = extract_code_block("```python\nimport bpy\nx = 1\n```")
        assert extract_code_block(extracted) == extracted

    def test_language_tag_ignored(self):
        assert extract_code_block("```PyThOn-3\ny=2\n```") == "y=2"

    def test_empty_response(self):
        with pytest.raises(EmptyResponse):
            extract_code_block("   ")


class TestRegistry:
    def test_load_registry_file(self, tmp_path):
        path = tmp_path / "registry.json"
        path.write_text(
            json.dumps(
                {
                    "providers": [
                        {
                            "provider_id": "claude",
                            "adapter": "anthropic",
                            "endpoint": "https://api.example/v1/messages",
                            "model_name": "some-model",
                            "api_key_env": "LLM_API_KEY_CLAUDE",
                        }
                    ]
                }
            ),
            encoding="utf-8",
        )
        registry = load_registry(path)
        assert "claude" in registry
        assert "mock" in registry  # mock always available
        assert registry["claude"].adapter == "anthropic"

    def test_default_registry_has_mock(self):
        assert "mock" in default_registry()
