"""Global near-duplicate removal via MinHash signatures and banded LSH.

Signatures are 112 (= 14 bands x 8 rows) 64-bit minima over seeded
affine permutations of shingle hashes; a pair is a duplicate candidate
when any band of 8 consecutive signature values collides. Candidate
pairs are clustered with union-find and one keeper survives per cluster
(oldest timestamp bucket, ties broken by id).

The banding S-curve has its midpoint at (1/14)^(1/8) ~= 0.719, so pairs
at Jaccard >= ~0.8 are caught with high probability while unrelated
pairs essentially never collide.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .documents import Document

__all__ = [
    "LshParams",
    "Signature",
    "DedupReport",
    "EmptyShingleSetError",
    "shingle",
    "minhash_signature",
    "lsh_candidates",
    "band_candidacy_probability",
    "UnionFind",
    "dedup",
]

_U64 = np.uint64
_MASK64 = (1 << 64) - 1


class EmptyShingleSetError(ValueError):
    pass


@dataclass(frozen=True)
class LshParams:
    hash_bits: int = 64
    bands: int = 14
    rows: int = 8
    shingle_width: int = 5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.hash_bits != 64:
            raise ValueError("only 64-bit signatures are supported")
        if self.bands < 1 or self.rows < 1:
            raise ValueError("bands and rows must be >= 1")
        if self.shingle_width < 1:
            raise ValueError("shingle_width must be >= 1")

    @property
    def signature_len(self) -> int:
        return self.bands * self.rows


@dataclass
class Signature:
    doc_id: str
    values: np.ndarray  # uint64, length bands * rows

    def band(self, index: int, rows: int) -> bytes:
        return self.values[index * rows : (index + 1) * rows].tobytes()


@dataclass
class DedupReport:
    input_docs: int = 0
    removed_docs: int = 0
    kept_docs: int = 0
    removed_token_share: float = 0.0
    cluster_count: int = 0

    def to_json(self) -> dict:
        return {
            "input_docs": self.input_docs,
            "removed_docs": self.removed_docs,
            "kept_docs": self.kept_docs,
            "removed_token_share": self.removed_token_share,
            "cluster_count": self.cluster_count,
        }


def _hash64(data: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little")


def shingle(text: str, w: int) -> set[int]:
    """64-bit hashes of normalized (lowercased, whitespace-collapsed)
    word w-grams; texts shorter than w words yield one whole-text shingle."""
    if w < 1:
        raise ValueError("shingle width must be >= 1")
    words = text.lower().split()
    if len(words) < w:
        return {_hash64(" ".join(words).encode("utf-8"))}
    return {_hash64(" ".join(words[i : i + w]).encode("utf-8")) for i in range(len(words) - w + 1)}


def _permutations(params: LshParams) -> tuple[np.ndarray, np.ndarray]:
    """Seeded affine permutations x -> a*x + b (mod 2^64), a odd so each
    map is a bijection on the 64-bit space."""
    rng = np.random.default_rng(params.seed)
    k = params.signature_len
    a = rng.integers(0, _MASK64, size=k, dtype=np.uint64, endpoint=True) | _U64(1)
    b = rng.integers(0, _MASK64, size=k, dtype=np.uint64, endpoint=True)
    return a, b


def minhash_signature(
    shingles: Iterable[int],
    params: LshParams,
    doc_id: str = "",
    _perms: tuple[np.ndarray, np.ndarray] | None = None,
) -> Signature:
    """Per-permutation minimum over the shingle hashes."""
    values = np.fromiter((s for s in shingles), dtype=np.uint64)
    if values.size == 0:
        raise EmptyShingleSetError(f"document {doc_id!r} produced no shingles")
    a, b = _perms if _perms is not None else _permutations(params)
    with np.errstate(over="ignore"):
        hashed = a[:, None] * values[None, :] + b[:, None]
    return Signature(doc_id, hashed.min(axis=1))


def _band_key(sig: Signature, band: int, params: LshParams) -> bytes:
    """Second independent seeded hash over one band's rows."""
    h = hashlib.blake2b(
        sig.band(band, params.rows),
        digest_size=16,
        key=(params.seed & _MASK64).to_bytes(8, "little") + band.to_bytes(4, "little"),
    )
    return h.digest()


def lsh_candidates(
    signatures: Sequence[Signature], params: LshParams
) -> Iterator[tuple[str, str]]:
    """Unique candidate pairs: some band's rows hash equal.

    Each band owns an independent bucket table, so bands shard cleanly.
    """
    lengths = {sig.values.size for sig in signatures}
    if lengths and lengths != {params.signature_len}:
        raise ValueError(f"signature lengths {lengths} != {params.signature_len}")
    seen: set[tuple[str, str]] = set()
    for band in range(params.bands):
        buckets: dict[bytes, list[int]] = {}
        for i, sig in enumerate(signatures):
            buckets.setdefault(_band_key(sig, band, params), []).append(i)
        for members in buckets.values():
            for j in range(1, len(members)):
                for i in range(j):
                    a, b = signatures[members[i]].doc_id, signatures[members[j]].doc_id
                    pair = (a, b) if a <= b else (b, a)
                    if pair not in seen:
                        seen.add(pair)
                        yield pair


def band_candidacy_probability(jaccard: float, params: LshParams) -> float:
    """Closed-form probability 1 - (1 - s^r)^b that a pair at Jaccard s
    becomes a candidate."""
    return 1.0 - (1.0 - jaccard**params.rows) ** params.bands


class UnionFind:
    def __init__(self) -> None:
        self.parent: dict[str, str] = {}

    def find(self, x: str) -> str:
        parent = self.parent.setdefault(x, x)
        if parent != x:
            self.parent[x] = parent = self.find(parent)
        return parent

    def union(self, a: str, b: str) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra

    def clusters(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {}
        for x in self.parent:
            out.setdefault(self.find(x), []).append(x)
        return out


@dataclass
class RemovalRecord:
    removed_id: str
    kept_id: str
    band_hits: int

    def to_json(self) -> dict:
        return {"removed_id": self.removed_id, "kept_id": self.kept_id, "band_hits": self.band_hits}


@dataclass
class DedupResult:
    kept: list[Document]
    report: DedupReport
    manifest: list[RemovalRecord] = field(default_factory=list)


def dedup(corpus: Iterable[Document], params: LshParams) -> DedupResult:
    """Remove near-duplicates globally. Within each candidate cluster the
    document with the lowest (timestamp_bucket, id) survives; the manifest
    maps every removed id to its keeper, with the count of bands in which
    the two collided directly."""
    docs = list(corpus)
    perms = _permutations(params)
    signatures = [
        minhash_signature(shingle(d.text, params.shingle_width), params, d.id, _perms=perms)
        for d in docs
    ]

    uf = UnionFind()
    pair_hits: dict[tuple[str, str], int] = {}
    for band in range(params.bands):
        buckets: dict[bytes, list[int]] = {}
        for i, sig in enumerate(signatures):
            buckets.setdefault(_band_key(sig, band, params), []).append(i)
        for members in buckets.values():
            if len(members) < 2:
                continue
            first = signatures[members[0]].doc_id
            for j in range(1, len(members)):
                uf.union(first, signatures[members[j]].doc_id)
            for j in range(1, len(members)):
                for i in range(j):
                    a, b = signatures[members[i]].doc_id, signatures[members[j]].doc_id
                    pair = (a, b) if a <= b else (b, a)
                    pair_hits[pair] = pair_hits.get(pair, 0) + 1

    by_id = {d.id: d for d in docs}
    removed_to_kept: dict[str, str] = {}
    cluster_count = 0
    for members in uf.clusters().values():
        if len(members) < 2:
            continue
        cluster_count += 1
        keeper = min(members, key=lambda i: (by_id[i].timestamp_bucket, i))
        for member in members:
            if member != keeper:
                removed_to_kept[member] = keeper

    kept = [d for d in docs if d.id not in removed_to_kept]
    total_tokens = sum(d.token_count for d in docs)
    removed_tokens = sum(by_id[i].token_count for i in removed_to_kept)
    report = DedupReport(
        input_docs=len(docs),
        removed_docs=len(removed_to_kept),
        kept_docs=len(kept),
        removed_token_share=removed_tokens / total_tokens if total_tokens else 0.0,
        cluster_count=cluster_count,
    )
    manifest = [
        RemovalRecord(
            removed_id=removed,
            kept_id=keeper,
            band_hits=pair_hits.get((removed, keeper) if removed <= keeper else (keeper, removed), 0),
        )
        for removed, keeper in sorted(removed_to_kept.items())
    ]
    return DedupResult(kept=kept, report=report, manifest=manifest)
