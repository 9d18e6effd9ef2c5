"""Agentic conversation augmentation.

A planner agent proposes skill sets and augmentation types for each seed
chunk; an augmenter agent instantiates each skill set as multi-turn
conversation blocks in a fixed marker format. Blocks are parsed,
validated (format, consistency, topical relevance), and exported as
SFT-ready line-delimited JSON.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .gateway import BackendError, CacheMissError, ChatRequest, Gateway, TransportError
from .parsing import ReplyParseError, extract_json
from .prompts import PromptLibrary
from .tokenizers import Tokenizer, WhitespaceTokenizer

__all__ = [
    "AugmentationType",
    "SkillSet",
    "AugmentationPlan",
    "Turn",
    "Conversation",
    "ValidationVerdict",
    "ValidationConfig",
    "BlockFormatError",
    "AugmentationError",
    "plan",
    "augment",
    "split_blocks",
    "parse_conversation_block",
    "serialize_conversation",
    "validate_conversation",
    "export_sft",
    "import_sft",
    "augment_seed_chunk",
]

DEFAULT_SYSTEM_PROMPT = "You are a helpful AI assistant."


class BlockFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"{message} (line {line})")
        self.line = line


class AugmentationError(RuntimeError):
    """Gateway failure during augmentation, tagged with the seed/skill it
    happened on."""

    def __init__(self, message: str, skill_set: str = ""):
        super().__init__(message)
        self.skill_set = skill_set


@dataclass(frozen=True)
class AugmentationType:
    type: str
    description: str


@dataclass(frozen=True)
class SkillSet:
    name: str
    augmentation_types: tuple[AugmentationType, ...]


@dataclass
class AugmentationPlan:
    skill_sets: list[SkillSet]

    @classmethod
    def from_json(cls, obj: object) -> "AugmentationPlan":
        if not isinstance(obj, dict) or not isinstance(obj.get("skill_sets"), list):
            raise ReplyParseError("plan JSON must be an object with a 'skill_sets' list")
        skill_sets = []
        for entry in obj["skill_sets"]:
            name = entry.get("name", "") if isinstance(entry, dict) else ""
            types = entry.get("augmentation_types", []) if isinstance(entry, dict) else []
            if not name or not isinstance(name, str):
                raise ReplyParseError("skill set name must be a nonempty string")
            if not types:
                raise ReplyParseError(f"skill set {name!r} has no augmentation types")
            skill_sets.append(
                SkillSet(
                    name=name,
                    augmentation_types=tuple(
                        AugmentationType(t.get("type", ""), t.get("description", ""))
                        for t in types
                    ),
                )
            )
        return cls(skill_sets)


@dataclass(frozen=True)
class Turn:
    role: str  # user | assistant
    content: str


@dataclass
class Conversation:
    title: str
    system: str
    turns: list[Turn]
    provenance: dict = field(default_factory=dict)

    def text(self) -> str:
        return "\n".join(t.content for t in self.turns)

    def to_json(self) -> dict:
        return {
            "title": self.title,
            "system": self.system,
            "turns": [{"role": t.role, "content": t.content} for t in self.turns],
            "provenance": self.provenance,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Conversation":
        return cls(
            title=obj.get("title", ""),
            system=obj.get("system", DEFAULT_SYSTEM_PROMPT),
            turns=[Turn(t["role"], t["content"]) for t in obj.get("turns", [])],
            provenance=obj.get("provenance", {}),
        )


@dataclass
class ValidationVerdict:
    passed: bool
    failures: list[dict] = field(default_factory=list)

    @classmethod
    def from_failures(cls, failures: list[dict]) -> "ValidationVerdict":
        return cls(passed=not failures, failures=failures)


@dataclass(frozen=True)
class ValidationConfig:
    min_pairs: int = 1
    max_turn_tokens: int = 8192
    min_relevance: float = 0.05


def plan(seed_chunk: str, gateway: Gateway, prompts: PromptLibrary | None = None,
         model: str = "") -> AugmentationPlan:
    """Ask the planner agent for skill sets; an empty plan is legal."""
    prompts = prompts or PromptLibrary()
    request = ChatRequest.build(
        model, system=prompts.get("planner_system"), user=seed_chunk
    )
    reply = gateway.complete(request).text
    try:
        obj = extract_json(reply)
    except ReplyParseError as exc:
        exc.raw_reply = reply
        raise
    return AugmentationPlan.from_json(obj)


_DELIMITER_RE = re.compile(r"^\s*---\s*$")
_BLOCK_RE = re.compile(r"<\|start\|>.*?<\|end\|>", re.DOTALL)


def split_blocks(reply: str) -> list[str]:
    """Split an augmenter reply into candidate conversation blocks.

    ``---`` delimiter lines separate segments (empty segments dropped);
    a segment holding several ``<|start|>``..``<|end|>`` spans yields one
    candidate per span, so back-to-back blocks parse too.
    """
    segments: list[str] = []
    current: list[str] = []
    for line in reply.splitlines():
        if _DELIMITER_RE.match(line):
            segments.append("\n".join(current))
            current = []
        else:
            current.append(line)
    segments.append("\n".join(current))

    blocks: list[str] = []
    for segment in segments:
        if not segment.strip():
            continue
        spans = _BLOCK_RE.findall(segment)
        if len(spans) > 1:
            blocks.extend(spans)
        else:
            blocks.append(segment)
    return blocks


def augment(
    seed_chunk: str,
    plan_: AugmentationPlan,
    gateway: Gateway,
    prompts: PromptLibrary | None = None,
    model: str = "",
) -> list[tuple[SkillSet, list[str]]]:
    """One augmenter call per skill set; returns raw candidate blocks."""
    if not plan_.skill_sets:
        raise ValueError("augment requires a nonempty plan")
    prompts = prompts or PromptLibrary()
    out: list[tuple[SkillSet, list[str]]] = []
    for skill_set in plan_.skill_sets:
        spec = {
            "name": skill_set.name,
            "augmentation_types": [
                {"type": a.type, "description": a.description}
                for a in skill_set.augmentation_types
            ],
        }
        user = (
            f"Seed material:\n\n{seed_chunk}\n\n"
            f"Skill set to instantiate:\n\n{json.dumps(spec, indent=2)}\n"
        )
        try:
            reply = gateway.complete(
                ChatRequest.build(model, system=prompts.get("augmenter_system"), user=user)
            ).text
        except (TransportError, BackendError, CacheMissError) as exc:
            raise AugmentationError(
                f"augmenter call failed for skill set {skill_set.name!r}: {exc}",
                skill_set=skill_set.name,
            ) from exc
        out.append((skill_set, split_blocks(reply)))
    return out


_MARKER_RE = re.compile(r"^<\|(title|system|user|assistant)\|>:[ ]?")


def parse_conversation_block(text: str) -> Conversation:
    """Parse one ``<|start|>``..``<|end|>`` block into a Conversation.

    Content after a role marker runs verbatim (code fences, blank lines
    and all) until the next marker line or ``<|end|>``; only trailing
    whitespace is normalized. A missing system line gets the default
    assistant persona. Raises :class:`BlockFormatError` for a missing
    start/end marker or broken user/assistant alternation.
    """
    lines = text.splitlines()
    try:
        start_idx = next(i for i, ln in enumerate(lines) if ln.strip() == "<|start|>")
    except StopIteration:
        raise BlockFormatError("missing <|start|> marker") from None
    try:
        end_idx = next(i for i, ln in enumerate(lines) if ln.strip() == "<|end|>")
    except StopIteration:
        raise BlockFormatError("missing <|end|> marker") from None
    if end_idx < start_idx:
        raise BlockFormatError("<|end|> precedes <|start|>")

    title = ""
    system = DEFAULT_SYSTEM_PROMPT
    turns: list[Turn] = []
    current_role: str | None = None
    current_lines: list[str] = []
    current_line_no = 0

    def flush() -> None:
        nonlocal title, system
        if current_role is None:
            return
        content = "\n".join(current_lines).rstrip()
        if current_role == "title":
            title = content
        elif current_role == "system":
            system = content or DEFAULT_SYSTEM_PROMPT
        else:
            expected = "user" if len(turns) % 2 == 0 else "assistant"
            if current_role != expected:
                raise BlockFormatError(
                    f"expected <|{expected}|> but found <|{current_role}|>",
                    line=current_line_no,
                )
            if not content:
                raise BlockFormatError(f"empty {current_role} turn", line=current_line_no)
            turns.append(Turn(current_role, content))

    for offset, line in enumerate(lines[start_idx + 1 : end_idx]):
        match = _MARKER_RE.match(line)
        if match:
            flush()
            current_role = match.group(1)
            current_lines = [line[match.end() :]]
            current_line_no = start_idx + 2 + offset
        elif current_role is not None:
            current_lines.append(line)
        elif line.strip():
            raise BlockFormatError(
                "content before first role marker", line=start_idx + 2 + offset
            )
    flush()

    if not turns:
        raise BlockFormatError("block contains no turns")
    if len(turns) % 2 != 0:
        raise BlockFormatError("conversation must end with an assistant turn")
    return Conversation(title=title, system=system, turns=turns)


def serialize_conversation(conv: Conversation) -> str:
    """Canonical block form; inverse of :func:`parse_conversation_block`
    modulo trailing-whitespace normalization."""
    lines = ["<|start|>", f"<|title|>: {conv.title}", f"<|system|>: {conv.system}"]
    for turn in conv.turns:
        lines.append(f"<|{turn.role}|>: {turn.content}")
    lines.append("<|end|>")
    return "\n".join(lines)


_WORD_RE = re.compile(r"[a-z0-9]+")
_STOPWORDS = frozenset(
    "a an and are as at be by can do for from has have how i in is it of on or "
    "that the this to use using was we what when where which will with you your".split()
)


def _content_words(text: str) -> set[str]:
    return {
        w for w in _WORD_RE.findall(text.lower()) if len(w) > 2 and w not in _STOPWORDS
    }


def relevance_overlap(conv: Conversation, seed_chunk: str) -> float:
    """Content-word Jaccard between the conversation and its seed chunk."""
    conv_words = _content_words(conv.title + "\n" + conv.text())
    seed_words = _content_words(seed_chunk)
    if not conv_words or not seed_words:
        return 0.0
    union = conv_words | seed_words
    return len(conv_words & seed_words) / len(union)


def validate_conversation(
    conv: Conversation,
    seed_chunk: str,
    config: ValidationConfig | None = None,
    tokenizer: Tokenizer | None = None,
) -> ValidationVerdict:
    """Format, consistency, and topical-relevance checks."""
    config = config or ValidationConfig()
    tokenizer = tokenizer or WhitespaceTokenizer()
    failures: list[dict] = []

    for i, turn in enumerate(conv.turns):
        expected = "user" if i % 2 == 0 else "assistant"
        if turn.role != expected:
            failures.append(
                {"check": "format", "detail": f"turn {i} role {turn.role!r}, expected {expected!r}"}
            )
            break
    if conv.turns and conv.turns[-1].role != "assistant":
        failures.append({"check": "format", "detail": "conversation must end with assistant"})
    if any(not t.content.strip() for t in conv.turns):
        failures.append({"check": "format", "detail": "empty turn content"})

    pairs = len(conv.turns) // 2
    if pairs < config.min_pairs:
        failures.append(
            {"check": "consistency", "detail": f"{pairs} pairs < minimum {config.min_pairs}"}
        )
    for i, turn in enumerate(conv.turns):
        if tokenizer.count(turn.content) > config.max_turn_tokens:
            failures.append(
                {"check": "consistency", "detail": f"turn {i} exceeds {config.max_turn_tokens} tokens"}
            )

    overlap = relevance_overlap(conv, seed_chunk)
    if overlap < config.min_relevance:
        failures.append(
            {"check": "relevance", "detail": f"overlap {overlap:.4f} < floor {config.min_relevance}"}
        )
    return ValidationVerdict.from_failures(failures)


_ROLE_TO_SFT = {"user": "human", "assistant": "gpt"}
_SFT_TO_ROLE = {"human": "user", "gpt": "assistant"}


def export_sft(convs: Iterable[Conversation], path: str | Path) -> int:
    """Write SFT-ready JSONL: one ``{"conversations": [{"from", "value"}]}``
    object per line, roles mapped user->human, assistant->gpt, with the
    system prompt as the leading element. Structurally invalid
    conversations are refused."""
    path = Path(path)
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for conv in convs:
            structural = _structural_failures(conv)
            if structural:
                raise ValueError(f"conversation {conv.title!r} not valid for export: {structural[0]}")
            record = {
                "conversations": [
                    {"from": "system", "value": conv.system},
                    *(
                        {"from": _ROLE_TO_SFT[t.role], "value": t.content}
                        for t in conv.turns
                    ),
                ]
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
            n += 1
    return n


def _structural_failures(conv: Conversation) -> list[str]:
    failures = []
    if not conv.turns:
        failures.append("no turns")
    for i, turn in enumerate(conv.turns):
        expected = "user" if i % 2 == 0 else "assistant"
        if turn.role != expected:
            failures.append(f"turn {i} out of alternation")
        if not turn.content:
            failures.append(f"turn {i} empty")
    if conv.turns and len(conv.turns) % 2 != 0:
        failures.append("must end with assistant turn")
    return failures


def import_sft(path: str | Path) -> list[Conversation]:
    """Inverse of :func:`export_sft` (title/provenance are not part of the
    SFT format and come back empty)."""
    convs: list[Conversation] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            system = DEFAULT_SYSTEM_PROMPT
            turns: list[Turn] = []
            for msg in record["conversations"]:
                if msg["from"] == "system":
                    system = msg["value"]
                else:
                    turns.append(Turn(_SFT_TO_ROLE[msg["from"]], msg["value"]))
            convs.append(Conversation(title="", system=system, turns=turns))
    return convs


@dataclass
class RejectedBlock:
    seed_id: str
    skill_set: str
    reason: str
    raw_block: str


def augment_seed_chunk(
    seed_id: str,
    seed_chunk: str,
    gateway: Gateway,
    prompts: PromptLibrary | None = None,
    validation: ValidationConfig | None = None,
    model: str = "",
) -> tuple[list[Conversation], list[RejectedBlock]]:
    """Full plan -> augment -> parse -> validate pass over one seed chunk.

    Every surviving conversation carries provenance back to the seed id,
    skill set, and augmentation type; every rejection carries a reason.
    """
    plan_ = plan(seed_chunk, gateway, prompts, model=model)
    conversations: list[Conversation] = []
    rejected: list[RejectedBlock] = []
    if not plan_.skill_sets:
        return conversations, rejected
    for skill_index, (skill_set, blocks) in enumerate(
        augment(seed_chunk, plan_, gateway, prompts, model=model)
    ):
        for block_index, block in enumerate(blocks):
            try:
                conv = parse_conversation_block(block)
            except BlockFormatError as exc:
                rejected.append(RejectedBlock(seed_id, skill_set.name, f"format: {exc}", block))
                continue
            conv.provenance = {
                "seed_id": seed_id,
                "skill_set": skill_set.name,
                "skill_set_index": skill_index,
                "block_index": block_index,
                "augmentation_type": (
                    skill_set.augmentation_types[min(block_index, len(skill_set.augmentation_types) - 1)].type
                ),
            }
            verdict = validate_conversation(conv, seed_chunk, validation)
            if verdict.passed:
                conversations.append(conv)
            else:
                rejected.append(
                    RejectedBlock(
                        seed_id,
                        skill_set.name,
                        "; ".join(f"{f['check']}: {f['detail']}" for f in verdict.failures),
                        block,
                    )
                )
    return conversations, rejected
