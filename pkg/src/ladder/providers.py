"""Network/mock providers for chat completions and sentence embeddings.

One chat-completion wire shape (model, messages, temperature, max_tokens) is
used for every hosted endpoint; header names are configurable. The mock
provider replays canned responses keyed by the sha256 of the prompt so the
whole pipeline runs offline and deterministically.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Protocol, Sequence

import numpy as np
import requests

from .corpus import TextCorpus
from .errors import (
    AuthError,
    EmbedderUnavailable,
    HttpError,
    MissingFixture,
    ParseError,
)

RETRYABLE_STATUS = frozenset({408, 429, 500, 502, 503, 504})


@dataclass(frozen=True)
class LlmRequest:
    """Connection settings for a chat-completion endpoint."""

    endpoint: str
    model: str
    temperature: float = 0.0
    max_tokens: int = 2048
    api_key_env: str = "LADDER_LLM_API_KEY"
    timeout: float = 120.0
    auth_header: str = "Authorization"
    auth_prefix: str = "Bearer "

    def __post_init__(self):
        if not (0.0 <= self.temperature <= 2.0):
            raise HttpError(f"temperature {self.temperature} outside [0, 2]")


def prompt_sha256(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def _post_with_retries(
    url: str,
    payload: dict,
    headers: dict,
    timeout: float,
    retries: int = 3,
    backoff: float = 1.0,
    sleep: Callable[[float], None] = time.sleep,
    session: Optional[requests.Session] = None,
) -> requests.Response:
    """POST with up to `retries` extra attempts on transient failures.

    Retryable: connection errors, timeouts and 408/429/5xx responses with
    exponential backoff. 401/403 raise AuthError immediately; other 4xx raise
    HttpError without retrying.
    """
    poster = (session or requests).post
    last_error: Exception | None = None
    for attempt in range(retries + 1):
        if attempt > 0:
            sleep(backoff * (2 ** (attempt - 1)))
        try:
            resp = poster(url, json=payload, headers=headers, timeout=timeout)
        except requests.RequestException as exc:
            last_error = exc
            continue
        if resp.status_code in (401, 403):
            raise AuthError(f"{url}: authentication failed ({resp.status_code})")
        if resp.status_code in RETRYABLE_STATUS:
            last_error = HttpError(f"{url}: HTTP {resp.status_code}")
            continue
        if resp.status_code >= 400:
            raise HttpError(f"{url}: HTTP {resp.status_code}: {resp.text[:200]}")
        return resp
    raise HttpError(f"{url}: giving up after {retries + 1} attempts: {last_error}")


class LlmProvider(Protocol):
    def complete(self, prompt: str) -> str: ...


class HttpLlmClient:
    """Single-turn chat completion over the common hosted-API wire shape."""

    def __init__(self, request: LlmRequest, sleep: Callable[[float], None] = time.sleep,
                 session: Optional[requests.Session] = None):
        self.request = request
        self._sleep = sleep
        self._session = session

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.request.api_key_env, "")
        if key:
            headers[self.request.auth_header] = f"{self.request.auth_prefix}{key}"
        return headers

    def complete(self, prompt: str) -> str:
        payload = {
            "model": self.request.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.request.temperature,
            "max_tokens": self.request.max_tokens,
        }
        resp = _post_with_retries(
            self.request.endpoint,
            payload,
            self._headers(),
            timeout=self.request.timeout,
            sleep=self._sleep,
            session=self._session,
        )
        try:
            body = resp.json()
            return body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ParseError(f"malformed completion body: {exc}", raw=resp.text) from exc


class MockLlmClient:
    """Replays responses from a JSONL fixture of {prompt_sha256, response}."""

    def __init__(self, responses: dict[str, str]):
        self._responses = dict(responses)

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "MockLlmClient":
        responses = {}
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                row = json.loads(line)
                responses[row["prompt_sha256"]] = row["response"]
        return cls(responses)

    def complete(self, prompt: str) -> str:
        digest = prompt_sha256(prompt)
        if digest not in self._responses:
            raise MissingFixture(f"no canned response for prompt sha256 {digest}")
        return self._responses[digest]


# --- sentence embedding providers ---------------------------------------------

class EmbeddingProvider(Protocol):
    def embed(self, sentences: Sequence[str]) -> np.ndarray: ...


def _normalize_text(text: str) -> str:
    return " ".join(text.split()).casefold()


def _trigrams(text: str) -> dict[str, int]:
    t = f"  {_normalize_text(text)}  "
    grams: dict[str, int] = {}
    for i in range(len(t) - 2):
        g = t[i : i + 3]
        grams[g] = grams.get(g, 0) + 1
    return grams


def _trigram_cosine(a: str, b: str) -> float:
    ga, gb = _trigrams(a), _trigrams(b)
    dot = sum(c * gb.get(g, 0) for g, c in ga.items())
    na = sum(c * c for c in ga.values()) ** 0.5
    nb = sum(c * c for c in gb.values()) ** 0.5
    if na == 0 or nb == 0:
        return 0.0
    return dot / (na * nb)


class LookupEmbedder:
    """Resolves sentences against a stored corpus instead of running an encoder.

    Exact resolution matches on whitespace/case-normalised text. With fuzzy
    matching enabled, a sentence may also resolve to the corpus sentence with
    the highest character-trigram cosine, provided it clears min_similarity
    (default 0.999, i.e. near-identical strings).
    """

    def __init__(self, corpus: TextCorpus, fuzzy: bool = True, min_similarity: float = 0.999):
        self.corpus = corpus
        self.fuzzy = fuzzy
        self.min_similarity = min_similarity
        self._index: dict[str, int] = {}
        for i, (_, text) in enumerate(corpus.sentences):
            self._index.setdefault(_normalize_text(text), i)

    def _resolve(self, sentence: str) -> int:
        key = _normalize_text(sentence)
        if key in self._index:
            return self._index[key]
        if self.fuzzy and len(self.corpus):
            best_i, best_sim = -1, -1.0
            for i, (_, text) in enumerate(self.corpus.sentences):
                sim = _trigram_cosine(sentence, text)
                if sim > best_sim:
                    best_i, best_sim = i, sim
            if best_sim >= self.min_similarity:
                return best_i
        raise EmbedderUnavailable(f"sentence not found in corpus: {sentence!r}")

    def embed(self, sentences: Sequence[str]) -> np.ndarray:
        rows = self.corpus.embeddings.as_float64()
        return np.stack([rows[self._resolve(s)] for s in sentences])


class RemoteEmbedder:
    """HTTP embedding endpoint that accepts {model, input: [...]} and replies
    {data: [{embedding: [...]}, ...]} in input order."""

    def __init__(self, endpoint: str, model: str, api_key_env: str = "LADDER_LLM_API_KEY",
                 timeout: float = 120.0, sleep: Callable[[float], None] = time.sleep,
                 session: Optional[requests.Session] = None):
        self.endpoint = endpoint
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout
        self._sleep = sleep
        self._session = session

    def embed(self, sentences: Sequence[str]) -> np.ndarray:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        resp = _post_with_retries(
            self.endpoint,
            {"model": self.model, "input": list(sentences)},
            headers,
            timeout=self.timeout,
            sleep=self._sleep,
            session=self._session,
        )
        try:
            body = resp.json()
            vectors = [row["embedding"] for row in body["data"]]
        except (ValueError, KeyError, TypeError) as exc:
            raise ParseError(f"malformed embedding body: {exc}", raw=resp.text) from exc
        if len(vectors) != len(sentences):
            raise EmbedderUnavailable(
                f"endpoint returned {len(vectors)} embeddings for {len(sentences)} sentences"
            )
        return np.asarray(vectors, dtype=np.float64)
