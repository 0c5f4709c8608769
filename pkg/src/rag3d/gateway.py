"""Multi-backend chat-completion gateway with retries and code extraction.

Concrete providers are registry entries: each names an adapter (the wire
shape), an endpoint, a model, and the env var holding its credential. Adding
a backend is data plus at most one adapter. A built-in ``mock`` adapter keeps
every pipeline test offline; tests may register programmable mock backends.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import requests

from .errors import DomainError

logger = logging.getLogger(__name__)

DEFAULT_TEMPERATURE = 0.2
DEFAULT_IN_FLIGHT_CAP = 4
EXCERPT_LIMIT = 500

MOCK_PROVIDER_ID = "mock"

# Script returned by the default mock backend: small, valid, and executable
# in both the headless host and the interactive scene.
DEFAULT_MOCK_SCRIPT = (
    "import bpy\n"
    "bpy.ops.mesh.primitive_cube_add(size=1.0, location=(0.0, 0.0, 0.5))\n"
    "bpy.context.active_object.name = 'generated_cube'\n"
)

_FENCE_RE = re.compile(r"```[^\n]*\n(.*?)```", re.DOTALL)


class GatewayError(DomainError):
    pass


class UnknownProvider(GatewayError):
    pass


class MissingCredentials(GatewayError):
    pass


class Timeout(GatewayError):
    pass


class ProviderError(GatewayError):
    def __init__(self, status: int, body_excerpt: str):
        super().__init__(f"provider returned {status}: {body_excerpt}")
        self.status = status
        self.body_excerpt = body_excerpt


class RetriesExhausted(GatewayError):
    pass


class EmptyResponse(GatewayError):
    pass


@dataclass(frozen=True)
class ProviderConfig:
    provider_id: str
    adapter: str = "openai_chat"  # openai_chat | anthropic | gemini | mock
    endpoint: str = ""
    model_name: str = ""
    api_key_env: str = ""
    timeout: float = 60.0
    max_retries: int = 2
    max_output: int = 4096
    in_flight_cap: int = DEFAULT_IN_FLIGHT_CAP


@dataclass(frozen=True)
class ChatMessage:
    role: str  # system | user | assistant
    content: str


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[ChatMessage, ...]
    provider_id: str
    temperature: float = DEFAULT_TEMPERATURE


@dataclass(frozen=True)
class ChatResponse:
    content: str
    provider_id: str
    latency: float
    truncated: bool = False


class MockBackend:
    """In-process fake provider.

    ``responses`` is consumed in order; an Exception instance is raised as a
    transient failure (exercises the retry path), a string is returned. When
    the list runs out the backend keeps returning ``fallback``.
    """

    def __init__(self, responses: list[object] | None = None, fallback: str = DEFAULT_MOCK_SCRIPT):
        self.responses = list(responses or [])
        self.fallback = fallback
        self.calls: list[ChatRequest] = []

    def complete(self, request: ChatRequest) -> str:
        self.calls.append(request)
        if self.responses:
            item = self.responses.pop(0)
            if isinstance(item, Exception):
                raise item
            return str(item)
        return self.fallback


def _redact(text: str, secrets: list[str]) -> str:
    for secret in secrets:
        if secret:
            text = text.replace(secret, "***")
    return text


def _openai_chat(cfg: ProviderConfig, req: ChatRequest, api_key: str) -> tuple[str, dict, dict]:
    headers = {"Authorization": f"Bearer {api_key}", "Content-Type": "application/json"}
    body = {
        "model": cfg.model_name,
        "messages": [{"role": m.role, "content": m.content} for m in req.messages],
        "temperature": req.temperature,
        "max_tokens": cfg.max_output,
    }
    return cfg.endpoint, headers, body


def _parse_openai_chat(data: dict) -> tuple[str, bool]:
    choice = data["choices"][0]
    return choice["message"]["content"], choice.get("finish_reason") == "length"


def _anthropic(cfg: ProviderConfig, req: ChatRequest, api_key: str) -> tuple[str, dict, dict]:
    headers = {"x-api-key": api_key, "anthropic-version": "2023-06-01", "Content-Type": "application/json"}
    system = ""
    messages = []
    for m in req.messages:
        if m.role == "system":
            system = m.content
        else:
            messages.append({"role": m.role, "content": m.content})
    body = {
        "model": cfg.model_name,
        "max_tokens": cfg.max_output,
        "temperature": req.temperature,
        "messages": messages,
    }
    if system:
        body["system"] = system
    return cfg.endpoint, headers, body


def _parse_anthropic(data: dict) -> tuple[str, bool]:
    text = "".join(block.get("text", "") for block in data["content"])
    return text, data.get("stop_reason") == "max_tokens"


def _gemini(cfg: ProviderConfig, req: ChatRequest, api_key: str) -> tuple[str, dict, dict]:
    headers = {"x-goog-api-key": api_key, "Content-Type": "application/json"}
    contents = []
    system = None
    for m in req.messages:
        if m.role == "system":
            system = {"parts": [{"text": m.content}]}
        else:
            role = "model" if m.role == "assistant" else "user"
            contents.append({"role": role, "parts": [{"text": m.content}]})
    body: dict = {
        "contents": contents,
        "generationConfig": {"temperature": req.temperature, "maxOutputTokens": cfg.max_output},
    }
    if system:
        body["systemInstruction"] = system
    return cfg.endpoint, headers, body


def _parse_gemini(data: dict) -> tuple[str, bool]:
    candidate = data["candidates"][0]
    text = "".join(p.get("text", "") for p in candidate["content"]["parts"])
    return text, candidate.get("finishReason") == "MAX_TOKENS"


_ADAPTERS: dict[str, tuple[Callable, Callable]] = {
    "openai_chat": (_openai_chat, _parse_openai_chat),
    "anthropic": (_anthropic, _parse_anthropic),
    "gemini": (_gemini, _parse_gemini),
}


class Gateway:
    """Shareable chat-completion client over a provider registry."""

    def __init__(
        self,
        registry: dict[str, ProviderConfig],
        mock_backends: dict[str, MockBackend] | None = None,
        transport: Callable[..., requests.Response] | None = None,
        sleep: Callable[[float], None] = time.sleep,
        backoff_base: float = 0.5,
    ):
        self.registry = dict(registry)
        self._mocks = dict(mock_backends or {})
        self._transport = transport or requests.post
        self._sleep = sleep
        self._backoff_base = backoff_base
        self._semaphores: dict[str, threading.Semaphore] = {}
        self._sem_lock = threading.Lock()

    def _semaphore(self, cfg: ProviderConfig) -> threading.Semaphore:
        with self._sem_lock:
            if cfg.provider_id not in self._semaphores:
                self._semaphores[cfg.provider_id] = threading.Semaphore(cfg.in_flight_cap)
            return self._semaphores[cfg.provider_id]

    def check_credentials(self, provider_id: str) -> None:
        """Raise before any work if the provider's credential is absent."""
        cfg = self.registry.get(provider_id)
        if cfg is None:
            raise UnknownProvider(f"provider {provider_id!r} is not registered")
        if cfg.adapter != "mock" and cfg.api_key_env and not os.environ.get(cfg.api_key_env):
            raise MissingCredentials(f"env var {cfg.api_key_env} is not set for provider {provider_id!r}")

    def complete(self, req: ChatRequest) -> ChatResponse:
        """Run one chat completion, retrying transient failures with backoff."""
        if not req.messages:
            raise GatewayError("chat request has no messages")
        cfg = self.registry.get(req.provider_id)
        if cfg is None:
            raise UnknownProvider(f"provider {req.provider_id!r} is not registered")
        start = time.monotonic()

        if cfg.adapter == "mock":
            content = self._complete_mock(cfg, req)
            return ChatResponse(content=content, provider_id=cfg.provider_id, latency=time.monotonic() - start)

        if cfg.adapter not in _ADAPTERS:
            raise UnknownProvider(f"provider {req.provider_id!r} uses unknown adapter {cfg.adapter!r}")
        self.check_credentials(req.provider_id)
        api_key = os.environ.get(cfg.api_key_env, "") if cfg.api_key_env else ""
        content, truncated = self._complete_http(cfg, req, api_key)
        return ChatResponse(
            content=content,
            provider_id=cfg.provider_id,
            latency=time.monotonic() - start,
            truncated=truncated,
        )

    def _complete_mock(self, cfg: ProviderConfig, req: ChatRequest) -> str:
        backend = self._mocks.get(cfg.provider_id)
        if backend is None:
            backend = MockBackend()
            self._mocks[cfg.provider_id] = backend
        last_error: Exception | None = None
        for attempt in range(cfg.max_retries + 1):
            try:
                return backend.complete(req)
            except Exception as exc:  # scripted transient failure
                last_error = exc
                if attempt < cfg.max_retries:
                    self._sleep(self._backoff_base * 2**attempt)
        raise RetriesExhausted(f"mock provider failed after {cfg.max_retries + 1} attempts: {last_error}")

    def _complete_http(self, cfg: ProviderConfig, req: ChatRequest, api_key: str) -> tuple[str, bool]:
        build, parse = _ADAPTERS[cfg.adapter]
        url, headers, body = build(cfg, req, api_key)
        secrets = [api_key]
        last_error: Exception | None = None
        timed_out = False

        with self._semaphore(cfg):
            for attempt in range(cfg.max_retries + 1):
                if attempt > 0:
                    self._sleep(self._backoff_base * 2 ** (attempt - 1))
                try:
                    response = self._transport(url, json=body, headers=headers, timeout=cfg.timeout)
                except requests.Timeout as exc:
                    timed_out = True
                    last_error = exc
                    logger.warning("provider %s timed out (attempt %d)", cfg.provider_id, attempt + 1)
                    continue
                except requests.RequestException as exc:
                    timed_out = False
                    last_error = exc
                    logger.warning(
                        "provider %s transport error (attempt %d): %s",
                        cfg.provider_id,
                        attempt + 1,
                        _redact(str(exc), secrets),
                    )
                    continue

                if response.status_code == 429 or response.status_code >= 500:
                    timed_out = False
                    excerpt = _redact(response.text[:EXCERPT_LIMIT], secrets)
                    last_error = ProviderError(response.status_code, excerpt)
                    logger.warning("provider %s returned %d (attempt %d)", cfg.provider_id, response.status_code, attempt + 1)
                    continue
                if response.status_code >= 400:
                    raise ProviderError(response.status_code, _redact(response.text[:EXCERPT_LIMIT], secrets))

                try:
                    return parse(response.json())
                except (KeyError, IndexError, TypeError, ValueError) as exc:
                    raise ProviderError(
                        response.status_code,
                        _redact(f"unparseable response ({exc}): {response.text[:EXCERPT_LIMIT]}", secrets),
                    ) from None

        if timed_out:
            raise Timeout(f"provider {cfg.provider_id!r} timed out after {cfg.max_retries + 1} attempts")
        raise RetriesExhausted(
            f"provider {cfg.provider_id!r} failed after {cfg.max_retries + 1} attempts: "
            + _redact(str(last_error), secrets)
        )


def extract_code_block(response_text: str) -> str:
    """Pull script content out of a model response.

    Fenced blocks are concatenated in order with the fence markers stripped;
    a response with no fences is returned whole, trimmed. Idempotent on
    already-extracted scripts.
    """
    if not response_text or not response_text.strip():
        raise EmptyResponse("model response is empty")
    blocks = _FENCE_RE.findall(response_text)
    if not blocks:
        return response_text.strip()
    return "\n".join(block.rstrip("\n") for block in blocks)


def default_registry() -> dict[str, ProviderConfig]:
    """Registry with the built-in mock provider only."""
    return {MOCK_PROVIDER_ID: ProviderConfig(provider_id=MOCK_PROVIDER_ID, adapter="mock")}


def load_registry(path: str | Path) -> dict[str, ProviderConfig]:
    """Load provider configs from a JSON file: {"providers": [{...}, ...]}.

    The mock provider is always present so offline operation works with any
    registry file.
    """
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    entries = data["providers"] if isinstance(data, dict) else data
    registry = default_registry()
    for raw in entries:
        cfg = ProviderConfig(**raw)
        registry[cfg.provider_id] = cfg
    return registry
