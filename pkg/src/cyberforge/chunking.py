"""Markdown-aware document chunking.

Splits a document into chunks of at most ``max_tokens`` tokens, cutting
at the highest-level Markdown heading available, then lower headings,
then blank-line paragraph boundaries, and only as a last resort at a
hard token boundary inside a paragraph. Chunks are exact slices of the
input, so concatenating them reproduces the document (hard splits may
normalize nothing - whitespace runs are carried with the preceding
word), and section coherence is preserved for downstream agents.
"""

from __future__ import annotations

import re
from typing import Iterable

from .documents import Document
from .tokenizers import Tokenizer

__all__ = ["chunk_markdown", "split_markdown"]

_FENCE_RE = re.compile(r"^(```|~~~)")


def chunk_markdown(doc: Document, max_tokens: int, tokenizer: Tokenizer) -> list[str]:
    """Split ``doc.text`` into chunks of at most ``max_tokens`` tokens."""
    return split_markdown(doc.text, max_tokens, tokenizer)


def split_markdown(text: str, max_tokens: int, tokenizer: Tokenizer) -> list[str]:
    if max_tokens < 1:
        raise ValueError("max_tokens must be >= 1")
    if tokenizer.count(text) <= max_tokens:
        return [text]
    for level in range(1, 7):
        sections = _split_at_headings(text, level)
        if len(sections) > 1:
            return _pack(sections, max_tokens, tokenizer, lambda t: split_markdown(t, max_tokens, tokenizer))
    paragraphs = _split_paragraphs(text)
    if len(paragraphs) > 1:
        return _pack(paragraphs, max_tokens, tokenizer, lambda t: _hard_split(t, max_tokens, tokenizer))
    return _hard_split(text, max_tokens, tokenizer)


def _line_spans(text: str) -> list[str]:
    """Lines with their terminators kept, so ''.join round-trips."""
    return text.splitlines(keepends=True)


def _split_at_headings(text: str, level: int) -> list[str]:
    """Cut before every ATX heading of exactly *level*, outside code fences."""
    prefix = "#" * level + " "
    pieces: list[str] = []
    current: list[str] = []
    in_fence = False
    for line in _line_spans(text):
        if _FENCE_RE.match(line):
            in_fence = not in_fence
        if not in_fence and line.startswith(prefix) and current:
            pieces.append("".join(current))
            current = []
        current.append(line)
    if current:
        pieces.append("".join(current))
    return pieces


def _split_paragraphs(text: str) -> list[str]:
    """Cut after runs of blank lines, outside code fences; blank lines
    stay attached to the preceding paragraph so joins are lossless."""
    pieces: list[str] = []
    current: list[str] = []
    in_fence = False
    prev_blank = False
    for line in _line_spans(text):
        is_blank = not line.strip()
        if _FENCE_RE.match(line):
            in_fence = not in_fence
        if not in_fence and prev_blank and not is_blank and current:
            pieces.append("".join(current))
            current = []
        current.append(line)
        prev_blank = is_blank and not in_fence
    if current:
        pieces.append("".join(current))
    return pieces


def _pack(pieces: list[str], max_tokens: int, tokenizer: Tokenizer, split_oversize) -> list[str]:
    """Greedily pack consecutive pieces into chunks of <= max_tokens.

    Uses the subadditive bound count(a + b) <= count(a) + count(b) + 1 to
    avoid re-tokenizing the accumulated chunk on every append; an exact
    recount only happens when the bound is exceeded.
    """
    chunks: list[str] = []
    current: list[str] = []
    bound = 0  # upper bound on token count of "".join(current)

    def flush() -> None:
        nonlocal bound
        if current:
            chunks.append("".join(current))
            current.clear()
            bound = 0

    for piece in pieces:
        piece_count = tokenizer.count(piece)
        if piece_count > max_tokens:
            flush()
            chunks.extend(split_oversize(piece))
            continue
        candidate_bound = bound + piece_count + (1 if current else 0)
        if current and candidate_bound > max_tokens:
            exact = tokenizer.count("".join(current) + piece)
            if exact > max_tokens:
                flush()
                candidate_bound = piece_count
            else:
                candidate_bound = exact
        current.append(piece)
        bound = candidate_bound
    flush()
    return chunks


_WORD_RE = re.compile(r"\S+\s*")


def _hard_split(text: str, max_tokens: int, tokenizer: Tokenizer) -> list[str]:
    """Token-boundary split of structureless text: pack whitespace-delimited
    words (each keeping its trailing whitespace) into chunks."""
    words = _WORD_RE.findall(text)
    if not words:
        return [text]
    leading = text[: len(text) - len("".join(words))]
    if leading:
        words[0] = leading + words[0]
    chunks: list[str] = []
    current: list[str] = []
    for word in words:
        if tokenizer.count(word) > max_tokens:
            if current:
                chunks.append("".join(current))
                current = []
            chunks.extend(_char_split(word, max_tokens, tokenizer))
            continue
        current.append(word)
        if tokenizer.count("".join(current)) > max_tokens:
            current.pop()
            chunks.append("".join(current))
            current = [word]
    if current:
        chunks.append("".join(current))
    return chunks


def _char_split(word: str, max_tokens: int, tokenizer: Tokenizer) -> Iterable[str]:
    """Last-resort split of a single oversized word at character level."""
    start = 0
    while start < len(word):
        lo, hi = 1, len(word) - start
        best = 1
        while lo <= hi:
            mid = (lo + hi) // 2
            if tokenizer.count(word[start : start + mid]) <= max_tokens:
                best = mid
                lo = mid + 1
            else:
                hi = mid - 1
        yield word[start : start + best]
        start += best
