"""Relevance scoring and threshold gating for the web corpus.

The production classifier is consumed through the :class:`RelevanceScorer`
interface (a remote scoring endpoint); a built-in logistic regression over
hashed character n-grams supports GPU-free desk-scale runs and tests.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Protocol, Sequence

import requests

from .documents import Document

__all__ = [
    "RelevanceScorer",
    "HashedNgramScorer",
    "RemoteScorer",
    "FilterReport",
    "ScoringError",
    "UnscoredDocumentError",
    "prefilter_short",
    "score_corpus",
    "filter_by_threshold",
]


class ScoringError(RuntimeError):
    """A scorer batch failed; carries the ids of the failed batch."""

    def __init__(self, message: str, batch_ids: Sequence[str] = ()):
        super().__init__(message)
        self.batch_ids = list(batch_ids)


class UnscoredDocumentError(ValueError):
    def __init__(self, doc_id: str):
        super().__init__(f"document {doc_id!r} has no relevance score")
        self.doc_id = doc_id


class RelevanceScorer(Protocol):
    def score_batch(self, texts: Sequence[str]) -> list[float]: ...


def _ngram_bucket(ngram: str, dim: int) -> int:
    digest = hashlib.blake2b(ngram.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % dim


class HashedNgramScorer:
    """Logistic regression over hashed character 3-5 grams.

    Weight files are JSON: ``{"dim", "bias", "ngram_min", "ngram_max",
    "weights"}`` where weights is either a dense list of length ``dim``
    or a sparse ``{bucket: weight}`` mapping. Scores are deterministic
    for fixed weights.
    """

    def __init__(self, weights: dict[int, float], dim: int, bias: float = 0.0,
                 ngram_min: int = 3, ngram_max: int = 5):
        self.weights = weights
        self.dim = dim
        self.bias = bias
        self.ngram_min = ngram_min
        self.ngram_max = ngram_max

    @classmethod
    def from_file(cls, path: str | Path) -> "HashedNgramScorer":
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
        raw = obj["weights"]
        if isinstance(raw, list):
            weights = {i: w for i, w in enumerate(raw) if w}
        else:
            weights = {int(k): float(v) for k, v in raw.items()}
        return cls(
            weights,
            dim=int(obj["dim"]),
            bias=float(obj.get("bias", 0.0)),
            ngram_min=int(obj.get("ngram_min", 3)),
            ngram_max=int(obj.get("ngram_max", 5)),
        )

    def ngrams(self, text: str) -> Iterator[str]:
        text = text.lower()
        for n in range(self.ngram_min, self.ngram_max + 1):
            for i in range(len(text) - n + 1):
                yield text[i : i + n]

    def score_one(self, text: str) -> float:
        z = self.bias
        for gram in self.ngrams(text):
            w = self.weights.get(_ngram_bucket(gram, self.dim))
            if w:
                z += w
        return 1.0 / (1.0 + math.exp(-z))

    def score_batch(self, texts: Sequence[str]) -> list[float]:
        return [self.score_one(t) for t in texts]


class RemoteScorer:
    """Scorer speaking the gateway scoring wire contract:
    ``POST url {"texts": [...]}`` -> ``{"scores": [...]}`` aligned by index."""

    def __init__(self, url: str, timeout: float = 60.0, session: requests.Session | None = None):
        self.url = url
        self.timeout = timeout
        self.session = session or requests.Session()

    def score_batch(self, texts: Sequence[str]) -> list[float]:
        try:
            resp = self.session.post(self.url, json={"texts": list(texts)}, timeout=self.timeout)
        except requests.RequestException as exc:
            raise ScoringError(f"scorer transport failure: {exc}") from exc
        if resp.status_code != 200:
            raise ScoringError(f"scorer returned HTTP {resp.status_code}: {resp.text[:200]}")
        scores = resp.json().get("scores")
        if not isinstance(scores, list) or len(scores) != len(texts):
            raise ScoringError("scorer response misaligned with request batch")
        return [float(s) for s in scores]


def prefilter_short(corpus: Iterable[Document], min_tokens: int) -> Iterator[Document]:
    """Drop documents shorter than ``min_tokens`` (0 keeps everything)."""
    if min_tokens < 0:
        raise ValueError("min_tokens must be >= 0")
    for doc in corpus:
        if doc.token_count >= min_tokens:
            yield doc


def score_corpus(
    corpus: Iterable[Document],
    scorer: RelevanceScorer,
    batch_size: int = 64,
) -> Iterator[Document]:
    """Populate ``doc.score`` for every document, batch by batch.

    A scorer failure raises :class:`ScoringError` naming the failed
    batch; documents already yielded stay valid, so callers persisting
    incrementally keep partial progress.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    batch: list[Document] = []

    def flush() -> Iterator[Document]:
        if not batch:
            return
        try:
            scores = scorer.score_batch([d.text for d in batch])
        except ScoringError as exc:
            exc.batch_ids = [d.id for d in batch]
            raise
        for doc, score in zip(batch, scores):
            if not 0.0 <= score <= 1.0:
                raise ScoringError(f"score {score} out of [0,1]", [doc.id])
            doc.score = score
            yield doc
        batch.clear()

    for doc in corpus:
        batch.append(doc)
        if len(batch) >= batch_size:
            yield from flush()
    yield from flush()


@dataclass
class FilterReport:
    input_docs: int = 0
    kept_docs: int = 0
    input_tokens: int = 0
    kept_tokens: int = 0
    threshold: float = 0.0

    @property
    def kept_ratio_docs(self) -> float:
        return self.kept_docs / self.input_docs if self.input_docs else 0.0

    @property
    def kept_ratio_tokens(self) -> float:
        return self.kept_tokens / self.input_tokens if self.input_tokens else 0.0

    def to_json(self) -> dict:
        return {
            "input_docs": self.input_docs,
            "kept_docs": self.kept_docs,
            "input_tokens": self.input_tokens,
            "kept_tokens": self.kept_tokens,
            "kept_ratio_docs": self.kept_ratio_docs,
            "kept_ratio_tokens": self.kept_ratio_tokens,
            "threshold": self.threshold,
        }

    def merge(self, other: "FilterReport") -> "FilterReport":
        """Commutative merge of two partial reports (same threshold)."""
        return FilterReport(
            input_docs=self.input_docs + other.input_docs,
            kept_docs=self.kept_docs + other.kept_docs,
            input_tokens=self.input_tokens + other.input_tokens,
            kept_tokens=self.kept_tokens + other.kept_tokens,
            threshold=self.threshold or other.threshold,
        )


def filter_by_threshold(
    corpus: Iterable[Document], threshold: float
) -> tuple[list[Document], FilterReport]:
    """Keep documents with score >= threshold. Every document must be scored."""
    report = FilterReport(threshold=threshold)
    kept: list[Document] = []
    for doc in corpus:
        if doc.score is None:
            raise UnscoredDocumentError(doc.id)
        report.input_docs += 1
        report.input_tokens += doc.token_count
        if doc.score >= threshold:
            kept.append(doc)
            report.kept_docs += 1
            report.kept_tokens += doc.token_count
    return kept, report
