"""Text embeddings: remote provider client plus a deterministic local fallback.

The local fallback is a seeded feature-hashing scheme (unigrams + adjacent
bigrams, signed buckets, L2-normalized). It is a pure function of
(text, dim), so the whole test suite and offline operation never need a
network or a model download. Remote providers are reached over a single
POST endpoint; responses are re-normalized on receipt so every vector the
system stores is unit-norm.
"""

from __future__ import annotations

import hashlib
import logging
import os
import re
import time
from dataclasses import dataclass

import numpy as np
import requests

from .errors import DomainError

logger = logging.getLogger(__name__)

LOCAL_FALLBACK = "local-fallback"
REMOTE = "remote"

DEFAULT_DIM = 768
EMBEDDING_API_KEY_ENV = "EMBEDDING_API_KEY"

_TOKEN_RE = re.compile(r"[a-z0-9]+")


class EmbeddingError(DomainError):
    pass


class EmptyText(EmbeddingError):
    pass


class ProviderUnreachable(EmbeddingError):
    pass


class ProviderBadResponse(EmbeddingError):
    pass


class DimensionMismatch(DomainError):
    pass


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    """A unit-norm float64 vector."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size == 0:
            raise EmbeddingError("embedding values must be a non-empty 1-D vector")
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])

    def tolist(self) -> list[float]:
        return self.values.tolist()


@dataclass(frozen=True)
class EmbedderConfig:
    provider: str = LOCAL_FALLBACK  # LOCAL_FALLBACK or REMOTE
    endpoint: str = ""
    model_name: str = ""
    dim: int = DEFAULT_DIM
    timeout: float = 30.0
    max_retries: int = 2

    def __post_init__(self):
        if self.dim <= 0:
            raise EmbeddingError(f"dim must be positive, got {self.dim}")
        if self.provider == REMOTE and not self.endpoint:
            raise EmbeddingError("remote embedder requires an endpoint")
        if self.provider not in (LOCAL_FALLBACK, REMOTE):
            raise EmbeddingError(f"unknown embedding provider {self.provider!r}")


def _hash64(feature: str, purpose: bytes) -> int:
    digest = hashlib.blake2b(feature.encode("utf-8"), digest_size=8, person=purpose).digest()
    return int.from_bytes(digest, "little")


def _features(text: str) -> list[str]:
    tokens = _TOKEN_RE.findall(text.lower())
    if not tokens:
        # No alphanumeric content: hash the raw trimmed text as one token so
        # every non-empty input still yields a nonzero vector.
        return [text.strip().lower()]
    return tokens + [f"{a} {b}" for a, b in zip(tokens, tokens[1:])]


def _local_embed(text: str, dim: int) -> np.ndarray:
    buckets = np.zeros(dim, dtype=np.float64)
    for feature in _features(text):
        index = _hash64(feature, b"bucket") % dim
        sign = 1.0 if _hash64(feature, b"sign") & 1 == 0 else -1.0
        buckets[index] += sign
    return buckets / np.linalg.norm(buckets)


def embed_text(text: str, cfg: EmbedderConfig) -> EmbeddingVector:
    """Embed one text into a unit-norm vector of cfg.dim dimensions."""
    if not text or not text.strip():
        raise EmptyText("cannot embed empty text")
    if cfg.provider == LOCAL_FALLBACK:
        return EmbeddingVector(_local_embed(text, cfg.dim))
    return _remote_embed([text], cfg)[0]


def embed_batch(texts: list[str], cfg: EmbedderConfig) -> list[EmbeddingVector]:
    """Embed texts in order; element i equals embed_text(texts[i], cfg)."""
    for i, text in enumerate(texts):
        if not text or not text.strip():
            raise EmptyText(f"cannot embed empty text at index {i}")
    if not texts:
        return []
    if cfg.provider == LOCAL_FALLBACK:
        return [EmbeddingVector(_local_embed(t, cfg.dim)) for t in texts]
    return _remote_embed(list(texts), cfg)


def _remote_embed(texts: list[str], cfg: EmbedderConfig) -> list[EmbeddingVector]:
    headers = {}
    api_key = os.environ.get(EMBEDDING_API_KEY_ENV)
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    payload = {"model": cfg.model_name, "inputs": texts}

    last_error: Exception | None = None
    for attempt in range(cfg.max_retries + 1):
        try:
            response = requests.post(cfg.endpoint, json=payload, headers=headers, timeout=cfg.timeout)
        except requests.RequestException as exc:
            last_error = exc
            if attempt < cfg.max_retries:
                delay = 0.5 * 2**attempt
                logger.warning("embedding provider unreachable (attempt %d), retrying in %.1fs", attempt + 1, delay)
                time.sleep(delay)
            continue
        if response.status_code >= 500 or response.status_code == 429:
            last_error = ProviderUnreachable(f"provider returned {response.status_code}")
            if attempt < cfg.max_retries:
                time.sleep(0.5 * 2**attempt)
            continue
        if response.status_code != 200:
            raise ProviderBadResponse(f"provider returned {response.status_code}")
        return _parse_remote_response(response, len(texts), cfg.dim)
    raise ProviderUnreachable(f"embedding provider unreachable after {cfg.max_retries + 1} attempts: {last_error}")


def _parse_remote_response(response: requests.Response, expected: int, dim: int) -> list[EmbeddingVector]:
    try:
        body = response.json()
        rows = body["embeddings"]
    except (ValueError, KeyError, TypeError):
        raise ProviderBadResponse("response is not an object with an 'embeddings' list") from None
    if not isinstance(rows, list) or len(rows) != expected:
        raise ProviderBadResponse(f"expected {expected} embeddings, got {len(rows) if isinstance(rows, list) else type(rows)}")
    vectors = []
    for i, row in enumerate(rows):
        try:
            values = np.asarray(row, dtype=np.float64)
        except (TypeError, ValueError):
            raise ProviderBadResponse(f"embedding {i} has non-numeric payload") from None
        if values.ndim != 1 or values.shape[0] != dim:
            raise ProviderBadResponse(f"embedding {i} has dim {values.shape}, expected {dim}")
        norm = np.linalg.norm(values)
        if not np.isfinite(norm) or norm == 0.0:
            raise ProviderBadResponse(f"embedding {i} is zero or non-finite")
        vectors.append(EmbeddingVector(values / norm))
    return vectors


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Dot product of two unit vectors, clamped to [-1, 1]."""
    if a.dim != b.dim:
        raise DimensionMismatch(f"cosine over mismatched dims {a.dim} vs {b.dim}")
    return float(min(1.0, max(-1.0, float(np.dot(a.values, b.values)))))
