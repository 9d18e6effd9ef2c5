"""Tokenizer abstraction with two built-in implementations.

* :class:`WhitespaceTokenizer` - fast, deterministic, used by tests and
  desk-scale runs.
* :class:`ByteBpeTokenizer` - byte-level BPE loading standard
  ``vocab.json`` / ``merges.txt`` files, so token accounting can match
  the convention of production web-corpus tooling.
"""

from __future__ import annotations

import json
from functools import lru_cache
from pathlib import Path
from typing import Protocol, runtime_checkable

import regex

__all__ = [
    "Tokenizer",
    "WhitespaceTokenizer",
    "ByteBpeTokenizer",
    "count_tokens",
]


@runtime_checkable
class Tokenizer(Protocol):
    name: str

    def count(self, text: str) -> int: ...

    def tokenize(self, text: str) -> list[str]: ...


def count_tokens(text: str, tokenizer: Tokenizer) -> int:
    """Deterministic nonnegative token count; empty text counts as 0."""
    if not text:
        return 0
    return tokenizer.count(text)


class WhitespaceTokenizer:
    """Splits on runs of whitespace. count("") == 0 by construction."""

    name = "whitespace"

    def tokenize(self, text: str) -> list[str]:
        return text.split()

    def count(self, text: str) -> int:
        return len(text.split())


# Pre-tokenization pattern used by byte-level BPE vocabularies: splits
# off common English contractions, letter runs, number runs, punctuation
# runs, and whitespace (trailing whitespace attaches to the next word).
_PRETOKEN_PATTERN = regex.compile(
    r"""'s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+"""
)


@lru_cache(maxsize=1)
def _bytes_to_unicode() -> dict[int, str]:
    """Map every byte to a printable unicode char (the reversible scheme
    standard vocab/merges files are written in)."""
    bs = (
        list(range(ord("!"), ord("~") + 1))
        + list(range(ord("¡"), ord("¬") + 1))
        + list(range(ord("®"), ord("ÿ") + 1))
    )
    cs = bs[:]
    n = 0
    for b in range(256):
        if b not in bs:
            bs.append(b)
            cs.append(256 + n)
            n += 1
    return dict(zip(bs, (chr(c) for c in cs)))


class ByteBpeTokenizer:
    """Byte-level BPE over standard ``vocab.json`` + ``merges.txt`` files.

    Merges are applied lowest-rank-first over the byte-mapped symbols of
    each pre-token, which reproduces the reference greedy algorithm.
    """

    def __init__(self, vocab: dict[str, int], merges: list[tuple[str, str]], name: str = "byte-bpe"):
        self.name = name
        self.vocab = vocab
        self.ranks = {pair: i for i, pair in enumerate(merges)}
        self._byte_encoder = _bytes_to_unicode()
        self._cache: dict[str, tuple[str, ...]] = {}

    @classmethod
    def from_files(cls, vocab_path: str | Path, merges_path: str | Path) -> "ByteBpeTokenizer":
        with open(vocab_path, encoding="utf-8") as fh:
            vocab = json.load(fh)
        merges: list[tuple[str, str]] = []
        with open(merges_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line or line.startswith("#version"):
                    continue
                left, _, right = line.partition(" ")
                merges.append((left, right))
        return cls(vocab, merges, name=f"byte-bpe:{Path(vocab_path).stem}")

    def _bpe(self, pretoken: str) -> tuple[str, ...]:
        cached = self._cache.get(pretoken)
        if cached is not None:
            return cached
        symbols = [self._byte_encoder[b] for b in pretoken.encode("utf-8")]
        while len(symbols) > 1:
            best_rank = None
            best_idx = -1
            for i in range(len(symbols) - 1):
                rank = self.ranks.get((symbols[i], symbols[i + 1]))
                if rank is not None and (best_rank is None or rank < best_rank):
                    best_rank = rank
                    best_idx = i
            if best_rank is None:
                break
            merged = symbols[best_idx] + symbols[best_idx + 1]
            symbols[best_idx : best_idx + 2] = [merged]
        result = tuple(symbols)
        if len(self._cache) < 100_000:
            self._cache[pretoken] = result
        return result

    def tokenize(self, text: str) -> list[str]:
        tokens: list[str] = []
        for match in _PRETOKEN_PATTERN.finditer(text):
            tokens.extend(self._bpe(match.group()))
        return tokens

    def encode(self, text: str) -> list[int]:
        return [self.vocab[tok] for tok in self.tokenize(text)]

    def count(self, text: str) -> int:
        n = 0
        for match in _PRETOKEN_PATTERN.finditer(text):
            n += len(self._bpe(match.group()))
        return n


def load_tokenizer(spec: dict | None) -> Tokenizer:
    """Build a tokenizer from a config mapping.

    ``{"kind": "whitespace"}`` or
    ``{"kind": "bpe", "vocab": path, "merges": path}``.
    """
    if not spec or spec.get("kind", "whitespace") == "whitespace":
        return WhitespaceTokenizer()
    if spec["kind"] == "bpe":
        return ByteBpeTokenizer.from_files(spec["vocab"], spec["merges"])
    raise ValueError(f"unknown tokenizer kind: {spec['kind']!r}")
