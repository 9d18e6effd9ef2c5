"""Semantic decontamination of training data against benchmark questions.

A training instance is removed when the cosine similarity between its
query embedding and any benchmark-question embedding exceeds the
threshold (default 0.9). Removal is monotone in the threshold and
idempotent.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..gateway import Gateway

__all__ = ["DecontamConfig", "DecontamReport", "RemovedQuery", "decontaminate"]


@dataclass(frozen=True)
class DecontamConfig:
    threshold: float = 0.9
    embedding_backend: str = "builtin"
    batch_size: int = 256

    def __post_init__(self) -> None:
        if not 0.0 < self.threshold <= 1.0:
            raise ValueError("threshold must be in (0, 1]")


@dataclass
class RemovedQuery:
    query_id: str
    matched_question_index: int
    similarity: float

    def to_json(self) -> dict:
        return {
            "query_id": self.query_id,
            "matched_question_index": self.matched_question_index,
            "similarity": self.similarity,
        }


@dataclass
class DecontamReport:
    candidates: int = 0
    removed: int = 0
    benchmark_size: int = 0
    threshold: float = 0.9
    embedding_backend: str = "builtin"
    removals: list[RemovedQuery] = field(default_factory=list)

    @property
    def removed_ratio_vs_benchmark(self) -> float:
        return self.removed / self.benchmark_size if self.benchmark_size else 0.0

    @property
    def removed_ratio_vs_corpus(self) -> float:
        return self.removed / self.candidates if self.candidates else 0.0

    def to_json(self) -> dict:
        return {
            "candidates": self.candidates,
            "removed": self.removed,
            "benchmark_size": self.benchmark_size,
            "threshold": self.threshold,
            "embedding_backend": self.embedding_backend,
            "removed_ratio_vs_benchmark": self.removed_ratio_vs_benchmark,
            "removed_ratio_vs_corpus": self.removed_ratio_vs_corpus,
            "removals": [r.to_json() for r in self.removals],
        }


def _embed_batched(gateway: Gateway, texts: Sequence[str], batch_size: int) -> np.ndarray:
    rows = []
    for start in range(0, len(texts), batch_size):
        rows.append(gateway.embed(list(texts[start : start + batch_size])))
    return np.vstack(rows)


def decontaminate(
    train_queries: Sequence[tuple[str, str]],
    bench_questions: Sequence[str],
    config: DecontamConfig,
    gateway: Gateway,
) -> tuple[list[str], DecontamReport]:
    """Remove training queries too similar to any benchmark question.

    ``train_queries`` are (id, query text) pairs; returns the ids kept
    (input order preserved) plus a report with every removal's best
    match. Embedding failures propagate as stage errors: nothing is
    silently dropped.
    """
    report = DecontamReport(
        candidates=len(train_queries),
        benchmark_size=len(bench_questions),
        threshold=config.threshold,
        embedding_backend=config.embedding_backend,
    )
    if not train_queries or not bench_questions:
        return [qid for qid, _ in train_queries], report

    bench_vecs = _embed_batched(gateway, list(bench_questions), config.batch_size)
    kept: list[str] = []
    for start in range(0, len(train_queries), config.batch_size):
        batch = train_queries[start : start + config.batch_size]
        query_vecs = gateway.embed([q for _, q in batch])
        sims = query_vecs @ bench_vecs.T
        best = sims.argmax(axis=1)
        for row, (qid, _) in enumerate(batch):
            similarity = float(sims[row, best[row]])
            if similarity > config.threshold:
                report.removed += 1
                report.removals.append(RemovedQuery(qid, int(best[row]), similarity))
            else:
                kept.append(qid)
    return kept, report
