"""Uniform chat/embedding access over HTTP plus a deterministic in-process mock.

The mock backend replaces every LLM call in tests and offline runs. Its chat
side recognizes the structured-reply markers carried by the shipped prompt
templates and fabricates byte-stable replies from a digest of its input, so an
entire ingest+query run is reproducible with no network.
"""

from __future__ import annotations

import hashlib
import os
import random
import re
import threading
import time
from dataclasses import dataclass, field

import httpx
import numpy as np

from .errors import (
    BackendError,
    ConfigError,
    InputError,
    MalformedResponseError,
    TransportError,
)

API_KEY_ENV = "DYNAGRAG_API_KEY"


@dataclass
class BackendConfig:
    base_url: str = "mock://local"
    api_key: str | None = None
    chat_model: str = "mock-chat"
    embed_model: str = "mock-embed"
    timeout: float = 30.0
    max_parallel_requests: int = 4
    retry_limit: int = 2
    # mock-only knobs; ignored by the HTTP backend
    mock_dim: int = 64
    mock_seed: int = 0

    def __post_init__(self):
        if self.max_parallel_requests < 1:
            raise ConfigError("max_parallel_requests must be >= 1")
        if self.timeout <= 0:
            raise ConfigError("timeout must be > 0")
        if self.retry_limit < 0:
            raise ConfigError("retry_limit must be >= 0")
        if self.mock_dim < 1:
            raise ConfigError("mock_dim must be >= 1")

    @property
    def is_mock(self) -> bool:
        return self.base_url.startswith("mock")


@dataclass
class ChatExchange:
    system_text: str
    user_text: str
    temperature: float = 0.0
    max_tokens: int = 1024
    response_text: str = ""


@dataclass
class EmbeddingVector:
    values: np.ndarray
    source_text_hash: str

    def __len__(self):
        return len(self.values)


def _digest(*parts: str) -> str:
    h = hashlib.sha256()
    for p in parts:
        h.update(p.encode("utf-8"))
        h.update(b"\x1f")
    return h.hexdigest()


# ---------------------------------------------------------------------------
# Mock backend
# ---------------------------------------------------------------------------

# Markers the shipped prompt templates carry; the mock dispatches on them.
_EXTRACT_MARKER = "TEXT TO ANALYZE:"
_TRIPLE_SCORE_MARKER = "three integers between 0 and 10"
_NINE_SCORE_MARKER = "nine integers between 0 and 10"
_YESNO_MARKER = "Answer yes or no"

_LABEL_RE = re.compile(r"\b[A-Z][a-zA-Z0-9]{2,}(?:\s+[A-Z][a-zA-Z0-9]{2,})*")

_TEMPLATE_WORDS = frozenset(
    {"entity", "relation", "text", "reply", "extract", "the", "and"}
)


def _mock_extract_reply(user_text: str) -> str:
    """Fabricate a deterministic ENTITY/RELATION block from the chunk text."""
    body = user_text.split(_EXTRACT_MARKER, 1)[-1]
    counts: dict[str, int] = {}
    for m in _LABEL_RE.finditer(body):
        label = m.group(0)
        if label.lower() in _TEMPLATE_WORDS:
            continue
        counts[label] = counts.get(label, 0) + 1
    labels = sorted(counts, key=lambda l: (-counts[l], l))[:8]
    lines = [f"ENTITY | {l} | {l} is discussed in the source text." for l in labels]
    # relate labels that co-occur in a sentence
    chosen = set(labels)
    pairs: list[tuple[str, str]] = []
    seen = set()
    for sentence in body.split("."):
        present = sorted(l for l in chosen if l in sentence)
        for a, b in zip(present, present[1:]):
            key = (a, b)
            if key not in seen:
                seen.add(key)
                pairs.append(key)
    for a, b in pairs[:12]:
        lines.append(f"RELATION | {a} | {b} | {a} is mentioned together with {b}.")
    if not lines:
        lines = ["ENTITY | Topic | Topic is discussed in the source text."]
    return "\n".join(lines)


def _mock_scores(seed_text: str, n: int) -> list[int]:
    raw = hashlib.sha256(seed_text.encode("utf-8")).digest()
    return [raw[i] % 11 for i in range(n)]


class MockGateway:
    """Deterministic offline stand-in for chat and embedding backends."""

    def __init__(self, config: BackendConfig):
        self.config = config

    def chat(self, system_text: str, user_text: str, temperature: float = 0.0,
             max_tokens: int = 1024) -> ChatExchange:
        text = self._respond(system_text, user_text)
        return ChatExchange(system_text, user_text, temperature, max_tokens, text)

    def _respond(self, system_text: str, user_text: str) -> str:
        # templates may wrap a marker across lines; match whitespace-insensitively
        flat = " ".join(user_text.split())
        if _EXTRACT_MARKER in user_text:
            return _mock_extract_reply(user_text)
        if _NINE_SCORE_MARKER in flat:
            scores = _mock_scores(_digest(system_text, user_text), 9)
            return "SCORES: " + " ".join(str(s) for s in scores)
        if _TRIPLE_SCORE_MARKER in flat:
            scores = _mock_scores(_digest(system_text, user_text), 3)
            return "SCORES: " + " ".join(str(s) for s in scores)
        if _YESNO_MARKER in user_text:
            # synonym confirmation: affirmative when the two labels share a word
            words = re.findall(r'"([^"]+)"', user_text)
            if len(words) >= 2:
                a = set(words[0].lower().split())
                b = set(words[1].lower().split())
                return "yes" if a & b else "no"
            return "no"
        tag = _digest(str(self.config.mock_seed), system_text, user_text)[:16]
        return f"Deterministic mock response {tag} grounded in the provided material."

    def embed(self, texts: list[str]) -> list[EmbeddingVector]:
        if not texts:
            raise InputError("embed requires at least one text")
        out = []
        for text in texts:
            if not text.strip():
                raise InputError("cannot embed empty text")
            out.append(self._embed_one(text))
        return out

    def _embed_one(self, text: str) -> EmbeddingVector:
        digest = _digest(str(self.config.mock_seed), text)
        seed = int(digest[:16], 16)
        rng = np.random.default_rng(seed)
        vec = rng.standard_normal(self.config.mock_dim)
        vec /= np.linalg.norm(vec)
        return EmbeddingVector(values=vec, source_text_hash=digest)


# ---------------------------------------------------------------------------
# HTTP backend (chat-completions wire contract)
# ---------------------------------------------------------------------------

_RETRYABLE_STATUS = frozenset({429, 500, 502, 503, 504})


class HttpGateway:
    """Client for chat-completions-compatible endpoints with retry and throttling."""

    def __init__(self, config: BackendConfig, transport=None, backoff_base: float = 0.1):
        self.config = config
        self._semaphore = threading.BoundedSemaphore(config.max_parallel_requests)
        self._backoff_base = backoff_base
        api_key = os.environ.get(API_KEY_ENV) or config.api_key
        headers = {}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._client = httpx.Client(
            base_url=config.base_url.rstrip("/"),
            timeout=config.timeout,
            headers=headers,
            transport=transport,
        )

    def close(self):
        self._client.close()

    def _post(self, path: str, payload: dict) -> dict:
        attempts = self.config.retry_limit + 1
        last_exc: Exception | None = None
        for attempt in range(attempts):
            if attempt:
                delay = self._backoff_base * (2 ** (attempt - 1))
                time.sleep(delay + random.random() * self._backoff_base)
            try:
                with self._semaphore:
                    resp = self._client.post(path, json=payload)
            except httpx.TransportError as exc:
                last_exc = exc
                continue
            if resp.status_code in _RETRYABLE_STATUS:
                last_exc = BackendError(
                    f"retryable status {resp.status_code}",
                    status=resp.status_code, body=resp.text,
                )
                continue
            if resp.status_code >= 300:
                raise BackendError(
                    f"backend returned {resp.status_code}",
                    status=resp.status_code, body=resp.text,
                )
            return resp.json()
        if isinstance(last_exc, BackendError):
            raise last_exc
        raise TransportError(f"request failed after {attempts} attempts: {last_exc}")

    def chat(self, system_text: str, user_text: str, temperature: float = 0.0,
             max_tokens: int = 1024) -> ChatExchange:
        payload = {
            "model": self.config.chat_model,
            "messages": [
                {"role": "system", "content": system_text},
                {"role": "user", "content": user_text},
            ],
            "temperature": temperature,
            "max_tokens": max_tokens,
        }
        data = self._post("/chat/completions", payload)
        try:
            text = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise MalformedResponseError("chat reply missing choices[0].message.content")
        if not text:
            raise MalformedResponseError("empty completion")
        return ChatExchange(system_text, user_text, temperature, max_tokens, text)

    def embed(self, texts: list[str]) -> list[EmbeddingVector]:
        if not texts:
            raise InputError("embed requires at least one text")
        for text in texts:
            if not text.strip():
                raise InputError("cannot embed empty text")
        data = self._post("/embeddings", {"model": self.config.embed_model, "input": texts})
        try:
            rows = [np.asarray(item["embedding"], dtype=np.float64) for item in data["data"]]
        except (KeyError, TypeError):
            raise MalformedResponseError("embedding reply missing data[i].embedding")
        if len(rows) != len(texts):
            raise BackendError("embedding count does not match input count")
        dims = {len(r) for r in rows}
        if len(dims) != 1:
            raise BackendError(f"inconsistent embedding dimensions in batch: {sorted(dims)}")
        if any(not np.all(np.isfinite(r)) for r in rows):
            raise BackendError("embedding contains non-finite values")
        return [
            EmbeddingVector(values=row, source_text_hash=_digest(text))
            for text, row in zip(texts, rows)
        ]


def make_gateway(config: BackendConfig, transport=None):
    """Build the gateway matching the configured backend kind."""
    if config.is_mock:
        return MockGateway(config)
    return HttpGateway(config, transport=transport)
