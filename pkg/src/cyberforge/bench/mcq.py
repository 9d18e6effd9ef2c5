"""MCQ benchmark items: generation, parsing, two-stage verification, and
quality thresholding.

Stage 1 runs a verifier with a structural checklist and a final JSON
object; stage 2 asks for chain-of-thought and a single integer quality
score. Only items that pass stage 1 and score strictly above the floor
(default 8) reach the benchmark.
"""

from __future__ import annotations

import logging
import re
import uuid
from dataclasses import dataclass, field
from typing import Iterable

from ..documents import TaxonomyPath
from ..gateway import ChatRequest, Gateway
from ..parsing import ReplyParseError, extract_json
from ..prompts import PromptLibrary

__all__ = [
    "McqItem",
    "Stage1Record",
    "SkippedBlock",
    "generate_mcqs",
    "parse_mcq_output",
    "verify_mcq_stage1",
    "score_quality",
    "extract_score",
    "threshold_filter",
]

logger = logging.getLogger(__name__)

LETTERS = ("A", "B", "C", "D")


@dataclass
class Stage1Record:
    passed: bool
    review_summary: str = ""
    audit_text: str = ""
    failure_reason: str = ""

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "review_summary": self.review_summary,
            "failure_reason": self.failure_reason,
        }


@dataclass
class McqItem:
    question: str
    answers: dict[str, str]
    solution: str
    explanation: str = ""
    taxonomy: TaxonomyPath | None = None
    quality_score: int | None = None
    passed_stage1: bool | None = None
    stage1: Stage1Record | None = None
    provenance: str = ""  # seed document id
    id: str = field(default_factory=lambda: uuid.uuid4().hex[:12])

    def validate(self) -> None:
        if sorted(self.answers) != list(LETTERS):
            raise ValueError(f"item {self.id}: answers must have exactly keys A-D")
        if self.solution not in self.answers:
            raise ValueError(f"item {self.id}: solution {self.solution!r} not among answer keys")

    def to_json(self) -> dict:
        obj = {
            "id": self.id,
            "question": self.question,
            "answers": self.answers,
            "solution": self.solution,
            "explanation": self.explanation,
            "provenance": self.provenance,
        }
        if self.taxonomy is not None:
            obj["category"] = self.taxonomy.category
            obj["leaf"] = self.taxonomy.leaf
        if self.quality_score is not None:
            obj["quality_score"] = self.quality_score
        if self.passed_stage1 is not None:
            obj["passed_stage1"] = self.passed_stage1
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "McqItem":
        taxonomy = None
        if obj.get("category"):
            taxonomy = TaxonomyPath(obj["category"], obj["leaf"])
        return cls(
            question=obj["question"],
            answers=dict(obj["answers"]),
            solution=obj["solution"],
            explanation=obj.get("explanation", ""),
            taxonomy=taxonomy,
            quality_score=obj.get("quality_score"),
            passed_stage1=obj.get("passed_stage1"),
            provenance=obj.get("provenance", ""),
            id=obj.get("id", uuid.uuid4().hex[:12]),
        )


def generate_mcqs(seed_chunk: str, gateway: Gateway,
                  prompts: PromptLibrary | None = None, model: str = "") -> str:
    """One generation call; returns the raw reply for parsing."""
    prompts = prompts or PromptLibrary()
    request = ChatRequest.build(
        model, system=prompts.get("mcq_generation"),
        user=f"Source material:\n\n{seed_chunk}",
    )
    return gateway.complete(request).text


@dataclass
class SkippedBlock:
    header: str
    reason: str


_QUESTION_HEADER_RE = re.compile(r"^\*\*Question\s+(\d+)\*\*\s*$", re.MULTILINE)
_OPTION_RE = re.compile(r"^([A-Z])\.\s?(.*)$")
_ANSWER_RE = re.compile(r"^\*\*Correct Answer\*\*:\s*(.*)$")
_EXPLANATION_RE = re.compile(r"^\*\*Explanation\*\*:\s?(.*)$")


def parse_mcq_output(text: str) -> tuple[list[McqItem], list[SkippedBlock]]:
    """Parse repeated ``**Question N**`` blocks into MCQ candidates.

    Malformed blocks are skipped with a logged reason; zero parseable
    blocks is a diagnostic, never a crash.
    """
    items: list[McqItem] = []
    skipped: list[SkippedBlock] = []
    headers = list(_QUESTION_HEADER_RE.finditer(text))
    for i, header in enumerate(headers):
        block_end = headers[i + 1].start() if i + 1 < len(headers) else len(text)
        block = text[header.end() : block_end]
        label = f"Question {header.group(1)}"
        try:
            items.append(_parse_block(block))
        except ValueError as exc:
            logger.info("skipping %s: %s", label, exc)
            skipped.append(SkippedBlock(label, str(exc)))
    if not items:
        logger.info("no parseable MCQ blocks in reply of %d chars", len(text))
    return items, skipped


def _parse_block(block: str) -> McqItem:
    question_lines: list[str] = []
    answers: dict[str, str] = {}
    solution: str | None = None
    explanation_lines: list[str] | None = None
    current_option: str | None = None

    for line in block.splitlines():
        answer_match = _ANSWER_RE.match(line)
        explanation_match = _EXPLANATION_RE.match(line)
        option_match = _OPTION_RE.match(line)
        if answer_match:
            raw = answer_match.group(1).strip()
            letter_match = re.match(r"^\[?([A-Za-z])[\].: ]?", raw)
            solution = letter_match.group(1).upper() if letter_match else raw
            current_option = None
        elif explanation_match:
            explanation_lines = [explanation_match.group(1)]
            current_option = None
        elif explanation_lines is not None:
            explanation_lines.append(line)
        elif option_match and option_match.group(1) in LETTERS:
            current_option = option_match.group(1)
            answers[current_option] = option_match.group(2)
        elif current_option is not None:
            answers[current_option] += "\n" + line
        else:
            question_lines.append(line)

    question = "\n".join(question_lines).strip()
    answers = {k: v.rstrip() for k, v in answers.items()}
    if not question:
        raise ValueError("missing question text")
    missing = [letter for letter in LETTERS if letter not in answers]
    if missing:
        raise ValueError(f"missing option {', '.join(missing)}")
    if solution is None:
        raise ValueError("missing correct answer")
    if solution not in LETTERS:
        raise ValueError(f"invalid solution letter {solution!r}")
    explanation = "\n".join(explanation_lines or []).strip()
    return McqItem(question=question, answers=answers, solution=solution, explanation=explanation)


def _stage1_user(item: McqItem, seed_chunk: str) -> str:
    option_lines = "\n".join(f"{letter}. {item.answers[letter]}" for letter in LETTERS)
    return (
        f"Original context:\n\n{seed_chunk}\n\n"
        f"Generated question:\n\n{item.question}\n{option_lines}\n"
        f"**Correct Answer**: {item.solution}\n"
        f"**Explanation**: {item.explanation}\n"
    )


def verify_mcq_stage1(
    item: McqItem,
    seed_chunk: str,
    gateway: Gateway,
    prompts: PromptLibrary | None = None,
    model: str = "",
) -> McqItem:
    """Stage-1 structural verification.

    The verifier's final fenced JSON is mapped back onto the item (the
    verifier may lightly rewrite fields); the full reply is kept as audit
    text. A missing or invalid final JSON gets one retry, then the item
    is marked failed with the parse reason.
    """
    prompts = prompts or PromptLibrary()
    user = _stage1_user(item, seed_chunk)
    reply = ""
    for attempt in range(2):
        nudge = "" if attempt == 0 else (
            "\n\nYour previous reply could not be parsed. End with the fenced JSON object."
        )
        request = ChatRequest.build(
            model, system=prompts.get("mcq_verifier"), user=user + nudge
        )
        reply = gateway.complete(request).text
        try:
            obj = extract_json(reply)
            if not isinstance(obj, dict) or "passed" not in obj:
                raise ReplyParseError("final JSON lacks a 'passed' field")
            break
        except ReplyParseError as exc:
            if attempt == 1:
                item.passed_stage1 = False
                item.stage1 = Stage1Record(
                    passed=False, audit_text=reply, failure_reason=f"parse: {exc}"
                )
                return item
    answers = obj.get("answers")
    solution = obj.get("solution", "")
    if not isinstance(answers, dict) or sorted(answers) != list(LETTERS) or solution not in answers:
        item.passed_stage1 = False
        item.stage1 = Stage1Record(
            passed=False, audit_text=reply,
            failure_reason=f"schema: solution {solution!r} not among answers A-D",
        )
        return item
    item.question = obj.get("question", item.question)
    item.answers = {k: str(v) for k, v in answers.items()}
    item.solution = solution
    item.explanation = obj.get("explanation", item.explanation)
    item.passed_stage1 = bool(obj["passed"])
    item.stage1 = Stage1Record(
        passed=item.passed_stage1,
        review_summary=str(obj.get("review_summary", "")),
        audit_text=reply,
    )
    return item


_SCORE_RE = re.compile(r"(?i)\bscore\b[^0-9-]*(\d{1,3})(?:\s*/\s*10)?")


def extract_score(reply: str) -> int | None:
    """Pull the final integer score out of a scoring reply; the last
    'Score: N' (optionally 'N/10') mention wins."""
    matches = _SCORE_RE.findall(reply)
    if not matches:
        return None
    value = int(matches[-1])
    return value if 0 <= value <= 10 else None


def score_quality(
    item: McqItem | object,
    gateway: Gateway,
    prompts: PromptLibrary | None = None,
    model: str = "",
    render: str | None = None,
) -> int | None:
    """Stage-2 quality score in [0, 10]; one retry on an unparseable
    reply, then ``None`` (caller drops the item with a reason)."""
    prompts = prompts or PromptLibrary()
    if render is None:
        assert isinstance(item, McqItem)
        option_lines = "\n".join(f"{letter}. {item.answers[letter]}" for letter in LETTERS)
        render = (
            f"{item.question}\n{option_lines}\n"
            f"**Correct Answer**: {item.solution}\n**Explanation**: {item.explanation}"
        )
    for attempt in range(2):
        nudge = "" if attempt == 0 else (
            "\n\nYour previous reply had no readable score. End with 'Score: <integer 0-10>'."
        )
        request = ChatRequest.build(model, system=prompts.get("mcq_scorer"), user=render + nudge)
        score = extract_score(gateway.complete(request).text)
        if score is not None:
            return score
    logger.info("dropping item: no parseable quality score after retry")
    return None


def threshold_filter(items: Iterable[McqItem], floor: int = 8) -> list[McqItem]:
    """Keep items scoring strictly greater than the floor."""
    return [
        item for item in items
        if item.quality_score is not None and item.quality_score > floor
    ]
