"""Replay mixing and chronological chunking.

General-knowledge documents are resampled from a fixed capped pool into
every chunk at a configured replay ratio (default 30% of the chunk's
token size), then the corpus is partitioned into chronological chunks
and the latest few selected for the final training corpus.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

from .documents import Document

__all__ = [
    "MixConfig",
    "ChunkPlan",
    "EmptyReplayPoolError",
    "build_replay_pool",
    "mix_chunk",
    "partition_chronological",
    "select_latest",
    "chunk_manifest_row",
]

logger = logging.getLogger(__name__)


class EmptyReplayPoolError(ValueError):
    pass


@dataclass(frozen=True)
class MixConfig:
    replay_ratio: float = 0.30
    replay_pool_cap_tokens: int = 0
    seed: int = 0
    ratio_basis: str = "tokens"  # or "documents"

    def __post_init__(self) -> None:
        if not 0.0 <= self.replay_ratio < 1.0:
            raise ValueError("replay_ratio must be in [0, 1)")
        if self.ratio_basis not in ("tokens", "documents"):
            raise ValueError("ratio_basis must be 'tokens' or 'documents'")


@dataclass
class ChunkPlan:
    k: int = 20
    select_last_n: int = 5
    boundaries: list[int] = field(default_factory=list)  # cut indices into the sorted corpus
    bucket_ranges: list[tuple[int, int]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.select_last_n > self.k:
            raise ValueError("select_last_n must be <= k")


def build_replay_pool(
    general_corpus: Iterable[Document], cap_tokens: int, seed: int
) -> list[Document]:
    """Seeded sample of the general corpus with total tokens <= cap_tokens.

    Greedy over a seeded shuffle: every document that still fits is taken,
    so the pool lands within one document of the cap unless the whole
    corpus is smaller than the cap (taken verbatim, with a warning).
    """
    if cap_tokens <= 0:
        raise ValueError("cap_tokens must be > 0")
    docs = list(general_corpus)
    total = sum(d.token_count for d in docs)
    if total <= cap_tokens:
        logger.warning(
            "replay pool cap %d exceeds general corpus size %d; using whole corpus",
            cap_tokens, total,
        )
        return docs
    rng = random.Random(f"replay-pool:{seed}")
    order = list(range(len(docs)))
    rng.shuffle(order)
    pool: list[Document] = []
    budget = cap_tokens
    for idx in order:
        doc = docs[idx]
        if doc.token_count <= budget:
            pool.append(doc)
            budget -= doc.token_count
    return pool


def _doc_size(doc: Document, basis: str) -> int:
    return doc.token_count if basis == "tokens" else 1


def mix_chunk(
    chunk: Sequence[Document],
    pool: Sequence[Document],
    config: MixConfig,
    chunk_index: int = 0,
) -> list[Document]:
    """Interleave replay documents into a chunk at the configured ratio.

    Replay size targets ratio * chunk size (token or document basis) and
    lands within one pool document of the target. Sampling is without
    replacement within the chunk but pools are reused across chunks.
    Original documents keep their relative order; replay copies are
    tagged source="replay", re-identified to stay unique across chunks,
    and adopt the timestamp bucket at their insertion point so the mixed
    stream stays chronologically sorted.
    """
    if config.replay_ratio == 0.0:
        return list(chunk)
    if not pool:
        raise EmptyReplayPoolError("replay ratio > 0 requires a nonempty pool")
    rng = random.Random(f"mix:{config.seed}:{chunk_index}")
    chunk_size = sum(_doc_size(d, config.ratio_basis) for d in chunk)
    target = config.replay_ratio * chunk_size

    order = list(range(len(pool)))
    rng.shuffle(order)
    replay: list[Document] = []
    replay_size = 0
    for idx in order:
        if replay_size >= target:
            break
        source_doc = pool[idx]
        replay.append(
            replace(
                source_doc,
                id=f"replay:{chunk_index}:{source_doc.id}",
                source="replay",
                score=None,
            )
        )
        replay_size += _doc_size(source_doc, config.ratio_basis)
    if replay_size < target:
        logger.warning(
            "chunk %d: replay pool exhausted at %d/%.0f %s",
            chunk_index, replay_size, target, config.ratio_basis,
        )

    mixed = list(chunk)
    for doc in replay:
        mixed.insert(rng.randint(0, len(mixed)), doc)

    last_bucket = chunk[0].timestamp_bucket if chunk else 0
    for doc in mixed:
        if doc.source == "replay":
            doc.timestamp_bucket = last_bucket
        else:
            last_bucket = doc.timestamp_bucket
    return mixed


def partition_chronological(
    corpus: Iterable[Document], k: int
) -> tuple[ChunkPlan, list[list[Document]]]:
    """Partition into k chronological chunks balanced by document count.

    Cut points fall at balanced positions (sizes within +/-1) but never
    split a run of equal timestamp buckets: the run stays in the chunk
    where it started and the following chunk absorbs the deficit.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    docs = sorted(corpus, key=lambda d: d.timestamp_bucket)
    n = len(docs)
    base, rem = divmod(n, k)
    cuts: list[int] = []
    ideal = 0
    prev = 0
    for i in range(k - 1):
        ideal += base + (1 if i < rem else 0)
        cut = max(ideal, prev)
        while 0 < cut < n and docs[cut - 1].timestamp_bucket == docs[cut].timestamp_bucket:
            cut += 1
        cuts.append(cut)
        prev = cut
    chunks: list[list[Document]] = []
    start = 0
    for cut in [*cuts, n]:
        chunks.append(docs[start:cut])
        start = cut
    plan = ChunkPlan(
        k=k,
        select_last_n=min(5, k),
        boundaries=cuts,
        bucket_ranges=[
            (c[0].timestamp_bucket, c[-1].timestamp_bucket) if c else (0, 0) for c in chunks
        ],
    )
    return plan, chunks


def select_latest(chunks: Sequence[Sequence[Document]], n: int) -> list[Document]:
    """Concatenate exactly the last n chunks, order preserved."""
    if n < 0 or n > len(chunks):
        raise ValueError(f"n must be in [0, {len(chunks)}]")
    out: list[Document] = []
    if n:
        for chunk in chunks[len(chunks) - n :]:
            out.extend(chunk)
    return out


def chunk_manifest_row(chunk_index: int, chunk: Sequence[Document]) -> dict:
    replay_tokens = sum(d.token_count for d in chunk if d.source == "replay")
    return {
        "chunk_index": chunk_index,
        "doc_count": len(chunk),
        "token_count": sum(d.token_count for d in chunk),
        "min_bucket": min((d.timestamp_bucket for d in chunk), default=0),
        "max_bucket": max((d.timestamp_bucket for d in chunk), default=0),
        "replay_tokens": replay_tokens,
    }
