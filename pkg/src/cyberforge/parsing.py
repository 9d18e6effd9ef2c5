"""Shared helpers for parsing structured text out of model replies."""

from __future__ import annotations

import json
import re

__all__ = ["ReplyParseError", "extract_json", "iter_fenced_blocks"]

_FENCE_OPEN_RE = re.compile(r"^\s*```([A-Za-z0-9_-]*)\s*$")
_FENCE_CLOSE_RE = re.compile(r"^\s*```\s*$")


class ReplyParseError(ValueError):
    """A model reply did not contain the expected structure; keeps the raw
    reply for diagnosis."""

    def __init__(self, message: str, raw_reply: str = ""):
        super().__init__(message)
        self.raw_reply = raw_reply


def iter_fenced_blocks(text: str) -> list[tuple[str, str]]:
    """All ```-fenced blocks as (language-tag, body) pairs, in order."""
    blocks: list[tuple[str, str]] = []
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        open_match = _FENCE_OPEN_RE.match(lines[i])
        if open_match:
            body: list[str] = []
            i += 1
            while i < len(lines) and not _FENCE_CLOSE_RE.match(lines[i]):
                body.append(lines[i])
                i += 1
            blocks.append((open_match.group(1).lower(), "\n".join(body)))
        i += 1
    return blocks


def extract_json(reply: str) -> object:
    """Pull a JSON value out of a model reply.

    The last well-formed fenced JSON block wins (replies put the final
    answer in the last step); failing that, the whole reply is tried,
    then the outermost ``{...}`` span. Raises :class:`ReplyParseError`
    when nothing parses.
    """
    candidates: list[str] = []
    for tag, body in iter_fenced_blocks(reply):
        if tag in ("json", ""):
            candidates.append(body)
    for body in reversed(candidates):
        try:
            return json.loads(body)
        except json.JSONDecodeError:
            continue
    try:
        return json.loads(reply)
    except json.JSONDecodeError:
        pass
    start, end = reply.find("{"), reply.rfind("}")
    if 0 <= start < end:
        try:
            return json.loads(reply[start : end + 1])
        except json.JSONDecodeError:
            pass
    raise ReplyParseError("no parseable JSON found in reply", raw_reply=reply)
