"""Uniform client layer for chat-completion, candidate-logprob scoring,
and embedding backends.

Every pipeline stage talks to models through :class:`Gateway`, which adds
retries with exponential backoff, an in-flight bound, and a deterministic
record/replay cache so stages re-run byte-identically offline. Mock
backends make the whole pipeline testable with zero network.

The HTTP backend speaks the prevailing chat-completion JSON shape
(messages array in, ``choices[0].message.content`` out, optional
per-token logprobs via the completions endpoint), so any local or hosted
inference server can act as teacher, verifier, or judge.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

import numpy as np
import requests

__all__ = [
    "ChatMessage",
    "ChatRequest",
    "ChatResponse",
    "ScoreRequest",
    "CandidateScore",
    "RetryPolicy",
    "BackendProfile",
    "TransportError",
    "BackendError",
    "CapabilityError",
    "CacheMissError",
    "ReplayCache",
    "MockBackend",
    "HttpBackend",
    "HashedNgramEmbedder",
    "Gateway",
    "pick_best",
]

VALID_ROLES = ("system", "user", "assistant")


class TransportError(RuntimeError):
    """Network-level failure; retried up to the policy's max attempts."""


class BackendError(RuntimeError):
    """Non-2xx or malformed backend reply; carries a body excerpt."""


class CapabilityError(RuntimeError):
    """Backend does not support the requested operation."""


class CacheMissError(KeyError):
    """Sealed replay cache has no entry for this request."""


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in VALID_ROLES:
            raise ValueError(f"invalid role {self.role!r}")


@dataclass(frozen=True)
class ChatRequest:
    model: str
    messages: tuple[ChatMessage, ...]
    temperature: float = 0.0
    max_tokens: int = 4096

    @classmethod
    def build(cls, model: str, *, system: str | None = None, user: str,
              temperature: float = 0.0, max_tokens: int = 4096) -> "ChatRequest":
        messages = []
        if system:
            messages.append(ChatMessage("system", system))
        messages.append(ChatMessage("user", user))
        return cls(model, tuple(messages), temperature, max_tokens)

    def body(self) -> dict:
        return {
            "model": self.model,
            "messages": [{"role": m.role, "content": m.content} for m in self.messages],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }


@dataclass
class ChatResponse:
    text: str
    usage: dict = field(default_factory=dict)
    retries: int = 0
    cached: bool = False


@dataclass(frozen=True)
class ScoreRequest:
    prompt: str
    candidates: tuple[str, ...]
    model: str = ""

    def __post_init__(self) -> None:
        if not self.candidates:
            raise ValueError("candidates must be nonempty")
        if len(set(self.candidates)) != len(self.candidates):
            raise ValueError("candidates must be distinct")

    def body(self) -> dict:
        return {"model": self.model, "prompt": self.prompt, "candidates": list(self.candidates)}


@dataclass(frozen=True)
class CandidateScore:
    logprob: float
    token_count: int = 1

    @property
    def normalized(self) -> float:
        return self.logprob / max(self.token_count, 1)


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    backoff_base: float = 0.5

    def delay(self, attempt: int) -> float:
        return self.backoff_base * (2**attempt)


@dataclass
class BackendProfile:
    kind: str = "mock"  # remote | mock | replay-cache
    endpoint: str = ""
    model: str = "default"
    auth_env: str = ""
    max_inflight: int = 4
    retry: RetryPolicy = field(default_factory=RetryPolicy)

    def __post_init__(self) -> None:
        if self.max_inflight < 1:
            raise ValueError("max_inflight must be >= 1")


class Backend(Protocol):
    def complete(self, request: ChatRequest) -> ChatResponse: ...

    def score_candidates(self, request: ScoreRequest) -> dict[str, CandidateScore]: ...

    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


class HashedNgramEmbedder:
    """Deterministic local embedder: counts of hashed character n-grams,
    L2-normalized. Good enough for lexical near-duplicate detection in
    decontamination; any real embedding backend satisfies the same
    contract."""

    def __init__(self, dim: int = 4096, ngram_min: int = 3, ngram_max: int = 5):
        self.dim = dim
        self.ngram_min = ngram_min
        self.ngram_max = ngram_max

    def buckets(self, text: str) -> dict[int, int]:
        text = text.lower()
        counts: dict[int, int] = {}
        for n in range(self.ngram_min, self.ngram_max + 1):
            for i in range(len(text) - n + 1):
                gram = text[i : i + n]
                digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
                bucket = int.from_bytes(digest, "little") % self.dim
                counts[bucket] = counts.get(bucket, 0) + 1
        return counts

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for row, text in enumerate(texts):
            for bucket, count in self.buckets(text).items():
                out[row, bucket] = count
            norm = np.linalg.norm(out[row])
            if norm > 0:
                out[row] /= norm
        return out


class MockBackend:
    """Scriptable in-process backend for tests and desk runs.

    ``reply_fn(request) -> str`` answers chat completions; ``script`` is a
    queue of str replies or exceptions consumed first (fault injection);
    ``score_fn(request) -> {candidate: CandidateScore}`` answers scoring.
    Tracks the maximum number of concurrent in-flight calls.
    """

    def __init__(
        self,
        reply_fn: Callable[[ChatRequest], str] | None = None,
        script: Iterable[object] | None = None,
        score_fn: Callable[[ScoreRequest], dict[str, CandidateScore]] | None = None,
        embedder: HashedNgramEmbedder | None = None,
        delay: float = 0.0,
    ):
        self.reply_fn = reply_fn
        self.script: list[object] = list(script or [])
        self.score_fn = score_fn
        self.embedder = embedder or HashedNgramEmbedder()
        self.delay = delay
        self.calls = 0
        self.inflight = 0
        self.max_inflight_seen = 0
        self._lock = threading.Lock()

    def _enter(self) -> None:
        with self._lock:
            self.calls += 1
            self.inflight += 1
            self.max_inflight_seen = max(self.max_inflight_seen, self.inflight)
        if self.delay:
            time.sleep(self.delay)

    def _exit(self) -> None:
        with self._lock:
            self.inflight -= 1

    def complete(self, request: ChatRequest) -> ChatResponse:
        self._enter()
        try:
            if self.script:
                item = self.script.pop(0)
                if isinstance(item, Exception):
                    raise item
                return ChatResponse(text=str(item), usage={"mock": True})
            if self.reply_fn is None:
                raise CapabilityError("mock backend has no chat reply configured")
            return ChatResponse(text=self.reply_fn(request), usage={"mock": True})
        finally:
            self._exit()

    def score_candidates(self, request: ScoreRequest) -> dict[str, CandidateScore]:
        self._enter()
        try:
            if self.score_fn is None:
                raise CapabilityError("mock backend has no scorer configured")
            return self.score_fn(request)
        finally:
            self._exit()

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        self._enter()
        try:
            return self.embedder.embed(texts)
        finally:
            self._exit()


class HttpBackend:
    """Chat-completion HTTP backend. ``profile.endpoint`` is the API base
    (e.g. ``http://host:8000/v1``)."""

    def __init__(self, profile: BackendProfile, session: requests.Session | None = None,
                 timeout: float = 120.0):
        self.profile = profile
        self.session = session or requests.Session()
        self.timeout = timeout

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.profile.auth_env:
            token = os.environ.get(self.profile.auth_env, "")
            if token:
                headers["Authorization"] = f"Bearer {token}"
        return headers

    def _post(self, path: str, body: dict) -> dict:
        url = self.profile.endpoint.rstrip("/") + path
        try:
            resp = self.session.post(url, json=body, headers=self._headers(), timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(f"POST {url} failed: {exc}") from exc
        if resp.status_code >= 500:
            raise TransportError(f"POST {url} -> HTTP {resp.status_code}: {resp.text[:200]}")
        if resp.status_code != 200:
            raise BackendError(f"POST {url} -> HTTP {resp.status_code}: {resp.text[:200]}")
        return resp.json()

    def complete(self, request: ChatRequest) -> ChatResponse:
        body = request.body()
        body["model"] = body["model"] or self.profile.model
        data = self._post("/chat/completions", body)
        try:
            text = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError) as exc:
            raise BackendError(f"malformed completion response: {str(data)[:200]}") from exc
        return ChatResponse(text=text, usage=data.get("usage", {}))

    def score_candidates(self, request: ScoreRequest) -> dict[str, CandidateScore]:
        """Echo-mode completions scoring: sum the token logprobs of each
        candidate continuation after the prompt."""
        out: dict[str, CandidateScore] = {}
        for candidate in request.candidates:
            body = {
                "model": request.model or self.profile.model,
                "prompt": request.prompt + candidate,
                "max_tokens": 0,
                "echo": True,
                "logprobs": 0,
            }
            data = self._post("/completions", body)
            try:
                lp = data["choices"][0]["logprobs"]
                offsets = lp["text_offset"]
                token_logprobs = lp["token_logprobs"]
            except (KeyError, IndexError, TypeError) as exc:
                raise CapabilityError("backend does not return token logprobs") from exc
            cut = len(request.prompt)
            total, count = 0.0, 0
            for offset, logprob in zip(offsets, token_logprobs):
                if offset >= cut and logprob is not None:
                    total += logprob
                    count += 1
            out[candidate] = CandidateScore(total, max(count, 1))
        return out

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        data = self._post("/embeddings", {"model": self.profile.model, "input": list(texts)})
        try:
            vectors = [item["embedding"] for item in data["data"]]
        except (KeyError, TypeError) as exc:
            raise BackendError(f"malformed embeddings response: {str(data)[:200]}") from exc
        dims = {len(v) for v in vectors}
        if len(dims) != 1:
            raise BackendError(f"embedding dimension mismatch across batch: {sorted(dims)}")
        arr = np.asarray(vectors, dtype=np.float64)
        norms = np.linalg.norm(arr, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        return arr / norms


class ReplayCache:
    """Append-only line-delimited JSON cache of request/response pairs.

    Keys hash the backend kind, model, and full request body, so prompts
    are bit-significant. ``record`` mode reads through and appends on
    miss; ``replay`` mode is sealed and raises on miss.
    """

    def __init__(self, path: str | Path, mode: str = "record"):
        if mode not in ("record", "replay"):
            raise ValueError("cache mode must be 'record' or 'replay'")
        self.path = Path(path)
        self.mode = mode
        self._lock = threading.Lock()
        self._entries: dict[str, dict] = {}
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        entry = json.loads(line)
                        self._entries[entry["key"]] = entry

    @staticmethod
    def key_for(kind: str, model: str, op: str, body: dict) -> str:
        canonical = json.dumps(
            {"kind": kind, "model": model, "op": op, "body": body},
            sort_keys=True, ensure_ascii=False,
        )
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def get(self, key: str) -> dict | None:
        return self._entries.get(key)

    def put(self, key: str, request: dict, response: dict) -> None:
        if self.mode == "replay":
            raise CacheMissError(f"sealed cache has no entry for {key}")
        entry = {"key": key, "request": request, "response": response, "timestamp": time.time()}
        with self._lock:
            self._entries[key] = entry
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry, ensure_ascii=False) + "\n")


class Gateway:
    """Backend wrapper adding retries, an in-flight bound, and caching."""

    def __init__(
        self,
        backend: Backend,
        profile: BackendProfile | None = None,
        cache: ReplayCache | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.backend = backend
        self.profile = profile or BackendProfile()
        self.cache = cache
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(self.profile.max_inflight)

    def _with_retries(self, fn: Callable[[], object]) -> tuple[object, int]:
        policy = self.profile.retry
        attempt = 0
        while True:
            try:
                with self._slots:
                    return fn(), attempt
            except TransportError:
                attempt += 1
                if attempt >= policy.max_attempts:
                    raise
                self._sleep(policy.delay(attempt - 1))

    def _cached(self, op: str, body: dict, call: Callable[[], dict]) -> tuple[dict, bool]:
        if self.cache is None:
            return call(), False
        key = ReplayCache.key_for(self.profile.kind, self.profile.model, op, body)
        hit = self.cache.get(key)
        if hit is not None:
            return hit["response"], True
        if self.cache.mode == "replay":
            raise CacheMissError(f"sealed cache miss for {op} request")
        response = call()
        self.cache.put(key, body, response)
        return response, False

    def complete(self, request: ChatRequest) -> ChatResponse:
        body = request.body()

        def call() -> dict:
            result, retries = self._with_retries(lambda: self.backend.complete(request))
            return {"text": result.text, "usage": result.usage, "retries": retries}

        response, cached = self._cached("complete", body, call)
        return ChatResponse(
            text=response["text"],
            usage=response.get("usage", {}),
            retries=response.get("retries", 0),
            cached=cached,
        )

    def score_candidates(self, request: ScoreRequest, normalize: bool = False) -> dict[str, float]:
        """Log-probability for each candidate continuation; finite values
        guaranteed. ``normalize`` divides by the candidate token count."""
        body = {**request.body(), "normalize": normalize}

        def call() -> dict:
            result, _ = self._with_retries(lambda: self.backend.score_candidates(request))
            return {
                "scores": {
                    cand: {"logprob": cs.logprob, "token_count": cs.token_count}
                    for cand, cs in result.items()
                }
            }

        response, _ = self._cached("score", body, call)
        out: dict[str, float] = {}
        for candidate in request.candidates:
            entry = response["scores"].get(candidate)
            if entry is None:
                raise BackendError(f"backend returned no score for candidate {candidate!r}")
            score = CandidateScore(entry["logprob"], entry.get("token_count", 1))
            value = score.normalized if normalize else score.logprob
            if not math.isfinite(value):
                raise BackendError(f"non-finite logprob for candidate {candidate!r}")
            out[candidate] = value
        return out

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        """Unit-norm embedding rows for each text."""
        if not texts:
            raise ValueError("texts must be nonempty")
        body = {"texts": list(texts)}

        def call() -> dict:
            result, _ = self._with_retries(lambda: self.backend.embed(texts))
            return {"vectors": np.asarray(result).tolist()}

        response, _ = self._cached("embed", body, call)
        arr = np.asarray(response["vectors"], dtype=np.float64)
        norms = np.linalg.norm(arr, axis=1)
        bad = np.flatnonzero(np.abs(norms - 1.0) > 1e-6)
        for row in bad:
            if norms[row] == 0:
                continue  # all-zero text embeds to the zero vector
            arr[row] /= norms[row]
        return arr


def pick_best(scores: dict[str, float]) -> str:
    """Argmax candidate; ties broken by lexicographically first key."""
    best = max(scores.values())
    return min(k for k, v in scores.items() if v == best)
