"""Core corpus data model and line-delimited JSON I/O.

A corpus is a stream of :class:`Document` records, one JSON object per
line, optionally gzip-compressed. Streaming keeps every pipeline stage
constant-memory.
"""

from __future__ import annotations

import gzip
import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import IO, Iterable, Iterator

__all__ = [
    "Document",
    "TaxonomyPath",
    "CATEGORY_LEAVES",
    "LEAF_ORDER",
    "content_id",
    "read_documents",
    "write_documents",
    "open_text",
]


def content_id(*parts: str) -> str:
    """Stable 12-hex id derived from content, so identical inputs always
    reproduce identical ids across runs."""
    joined = "\x1f".join(parts)
    return hashlib.blake2b(joined.encode("utf-8"), digest_size=6).hexdigest()

# Category -> leaves, in canonical display order.
CATEGORY_LEAVES: dict[str, tuple[str, ...]] = {
    "knowledge": ("general", "frameworks"),
    "skill": ("offensive",),
    "tools": ("cli", "kali"),
}

# Flat leaf order used by reports: Gen, Frm, Off, CLI, Kali.
LEAF_ORDER: tuple[tuple[str, str], ...] = tuple(
    (cat, leaf) for cat in ("knowledge", "skill", "tools") for leaf in CATEGORY_LEAVES[cat]
)


@dataclass(frozen=True)
class TaxonomyPath:
    """A category/leaf pair in the knowledge / skill / tools taxonomy."""

    category: str
    leaf: str

    def __post_init__(self) -> None:
        leaves = CATEGORY_LEAVES.get(self.category)
        if leaves is None:
            raise ValueError(f"unknown taxonomy category: {self.category!r}")
        if self.leaf not in leaves:
            raise ValueError(
                f"leaf {self.leaf!r} does not belong to category {self.category!r}"
            )

    def __str__(self) -> str:
        return f"{self.category}/{self.leaf}"

    @classmethod
    def parse(cls, value: str) -> "TaxonomyPath":
        category, sep, leaf = value.partition("/")
        if not sep:
            raise ValueError(f"taxonomy path must look like 'category/leaf': {value!r}")
        return cls(category, leaf)

    @classmethod
    def all_paths(cls) -> list["TaxonomyPath"]:
        return [cls(cat, leaf) for cat, leaf in LEAF_ORDER]


@dataclass
class Document:
    """One corpus record.

    ``token_count`` follows whatever tokenizer the pipeline is configured
    with; ``timestamp_bucket`` is an ordinal that follows crawl-date order.
    """

    id: str
    text: str
    source: str
    timestamp_bucket: int = 0
    token_count: int = 0
    category: TaxonomyPath | None = None
    score: float | None = None
    meta: dict = field(default_factory=dict)

    def with_tokens(self, tokenizer) -> "Document":
        """Return a copy whose token_count is recomputed with *tokenizer*."""
        return replace(self, token_count=tokenizer.count(self.text))

    def to_json(self) -> dict:
        obj = {
            "id": self.id,
            "text": self.text,
            "source": self.source,
            "timestamp_bucket": self.timestamp_bucket,
            "token_count": self.token_count,
        }
        if self.category is not None:
            obj["category"] = str(self.category)
        if self.score is not None:
            obj["score"] = self.score
        if self.meta:
            obj["meta"] = self.meta
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "Document":
        category = obj.get("category")
        return cls(
            id=obj["id"],
            text=obj["text"],
            source=obj["source"],
            timestamp_bucket=int(obj.get("timestamp_bucket", 0)),
            token_count=int(obj.get("token_count", 0)),
            category=TaxonomyPath.parse(category) if category else None,
            score=obj.get("score"),
            meta=obj.get("meta", {}),
        )


def open_text(path: str | Path, mode: str = "rt") -> IO[str]:
    """Open a text file, transparently handling ``.gz`` suffixes."""
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, mode, encoding="utf-8")
    return open(path, mode, encoding="utf-8")


def read_documents(path: str | Path) -> Iterator[Document]:
    """Stream documents from a line-delimited JSON file."""
    with open_text(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield Document.from_json(json.loads(line))


def write_documents(path: str | Path, docs: Iterable[Document]) -> int:
    """Write documents as line-delimited JSON. Returns the count written."""
    n = 0
    with open_text(path, "wt") as fh:
        for doc in docs:
            fh.write(json.dumps(doc.to_json(), ensure_ascii=False) + "\n")
            n += 1
    return n
