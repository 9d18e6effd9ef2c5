"""Open-ended QA benchmark items: plan, generate, and dual-verify.

Open QA goes through three agent calls per item: an evaluation-plan
builder (fenced JSON plan list), a question/answer generator (fixed
section layout with a sufficiency flag), and two independent verifiers
whose 12-point checklists must both come back PASS for the item to reach
human review. The consensus quality score is the minimum of the two.
"""

from __future__ import annotations

import json
import logging
import re
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from ..documents import TaxonomyPath
from ..gateway import ChatRequest, Gateway
from ..parsing import ReplyParseError, extract_json
from ..prompts import PromptLibrary
from ..tokenizers import Tokenizer, WhitespaceTokenizer

__all__ = [
    "EvaluationPlanItem",
    "OpenQaItem",
    "VerifierRecord",
    "ConsensusRecord",
    "DroppedPlan",
    "CHECKLIST_SIZE",
    "plan_openqa",
    "generate_openqa",
    "parse_openqa_reply",
    "verify_openqa",
    "parse_verifier_reply",
]

logger = logging.getLogger(__name__)

CONTEXT_PLACEHOLDER = "<CONTEXT>"
CHECKLIST_SIZE = 12
MAX_EXCERPT_TOKENS = 2048


@dataclass
class EvaluationPlanItem:
    evaluation_name: str
    purpose: str
    instruction_template: str
    answer_guideline: str
    context_excerpt: str = ""

    def needs_context(self) -> bool:
        return CONTEXT_PLACEHOLDER in self.instruction_template

    def to_json(self) -> dict:
        return {
            "evaluation_name": self.evaluation_name,
            "purpose": self.purpose,
            "instruction_template": self.instruction_template,
            "answer_guideline": self.answer_guideline,
            "context_excerpt": self.context_excerpt,
        }


@dataclass
class VerifierRecord:
    verdict: str  # PASS | FAIL
    checklist: dict[str, bool] = field(default_factory=dict)
    issues: list[str] = field(default_factory=list)
    score: int = 0
    parse_failure: str = ""

    @property
    def passed(self) -> bool:
        return self.verdict == "PASS"

    def to_json(self) -> dict:
        return {
            "verdict": self.verdict,
            "checklist": self.checklist,
            "issues": self.issues,
            "score": self.score,
            "parse_failure": self.parse_failure,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "VerifierRecord":
        return cls(
            verdict=obj.get("verdict", "FAIL"),
            checklist=dict(obj.get("checklist", {})),
            issues=list(obj.get("issues", [])),
            score=int(obj.get("score", 0)),
            parse_failure=obj.get("parse_failure", ""),
        )


@dataclass
class ConsensusRecord:
    records: list[VerifierRecord]
    passed: bool
    score: int

    def to_json(self) -> dict:
        return {
            "records": [r.to_json() for r in self.records],
            "passed": self.passed,
            "score": self.score,
        }


@dataclass
class OpenQaItem:
    evaluation_name: str
    question: str
    reference_answer: str
    taxonomy: TaxonomyPath | None = None
    verifier_records: list[VerifierRecord] = field(default_factory=list)
    quality_score: int | None = None
    human_status: str = "pending"  # pending | accepted | rejected | edited
    provenance: str = ""
    id: str = field(default_factory=lambda: uuid.uuid4().hex[:12])

    @property
    def consensus_passed(self) -> bool:
        return len(self.verifier_records) == 2 and all(r.passed for r in self.verifier_records)

    def to_json(self) -> dict:
        obj = {
            "id": self.id,
            "evaluation_name": self.evaluation_name,
            "question": self.question,
            "reference_answer": self.reference_answer,
            "verifier_records": [r.to_json() for r in self.verifier_records],
            "human_status": self.human_status,
            "provenance": self.provenance,
        }
        if self.taxonomy is not None:
            obj["category"] = self.taxonomy.category
            obj["leaf"] = self.taxonomy.leaf
        if self.quality_score is not None:
            obj["quality_score"] = self.quality_score
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "OpenQaItem":
        taxonomy = None
        if obj.get("category"):
            taxonomy = TaxonomyPath(obj["category"], obj["leaf"])
        return cls(
            evaluation_name=obj.get("evaluation_name", ""),
            question=obj["question"],
            reference_answer=obj["reference_answer"],
            taxonomy=taxonomy,
            verifier_records=[VerifierRecord.from_json(r) for r in obj.get("verifier_records", [])],
            quality_score=obj.get("quality_score"),
            human_status=obj.get("human_status", "pending"),
            provenance=obj.get("provenance", ""),
            id=obj.get("id", uuid.uuid4().hex[:12]),
        )


@dataclass
class DroppedPlan:
    evaluation_name: str
    reason: str


def plan_openqa(
    seed_chunk: str,
    gateway: Gateway,
    prompts: PromptLibrary | None = None,
    model: str = "",
    tokenizer: Tokenizer | None = None,
) -> tuple[list[EvaluationPlanItem], list[DroppedPlan]]:
    """Evaluation-plan builder call. An empty plan list is legal; plan
    items violating the placeholder/excerpt pairing or the excerpt token
    bound are dropped with a reason."""
    prompts = prompts or PromptLibrary()
    reply = gateway.complete(
        ChatRequest.build(model, system=prompts.get("openqa_planner"),
                          user=f"seed_data:\n\n{seed_chunk}")
    ).text
    try:
        obj = extract_json(reply)
    except ReplyParseError as exc:
        exc.raw_reply = reply
        raise
    if not isinstance(obj, dict) or not isinstance(obj.get("evaluation_plan"), list):
        raise ReplyParseError("plan JSON must contain an 'evaluation_plan' list", raw_reply=reply)
    return validate_plan_items(obj["evaluation_plan"], tokenizer or WhitespaceTokenizer())


def validate_plan_items(
    raw_items: list, tokenizer: Tokenizer
) -> tuple[list[EvaluationPlanItem], list[DroppedPlan]]:
    items: list[EvaluationPlanItem] = []
    dropped: list[DroppedPlan] = []
    for raw in raw_items:
        if not isinstance(raw, dict):
            dropped.append(DroppedPlan("", "plan entry is not an object"))
            continue
        item = EvaluationPlanItem(
            evaluation_name=str(raw.get("evaluation_name", "")),
            purpose=str(raw.get("purpose", "")),
            instruction_template=str(raw.get("instruction_template", "")),
            answer_guideline=str(raw.get("answer_guideline", "")),
            context_excerpt=str(raw.get("context_excerpt", "") or ""),
        )
        if len(item.evaluation_name.split()) > 5:
            dropped.append(DroppedPlan(item.evaluation_name, "evaluation name exceeds 5 words"))
        elif item.needs_context() and not item.context_excerpt:
            dropped.append(DroppedPlan(item.evaluation_name, "placeholder without excerpt"))
        elif item.context_excerpt and not item.needs_context():
            dropped.append(DroppedPlan(item.evaluation_name, "excerpt without placeholder"))
        elif tokenizer.count(item.context_excerpt) > MAX_EXCERPT_TOKENS:
            dropped.append(DroppedPlan(item.evaluation_name, "excerpt too long"))
        else:
            items.append(item)
    return items, dropped


_SUFFICIENCY_RE = re.compile(
    r"^###\s*Sufficient Information for Grounded OpenQA:\s*(\S*)\s*$", re.MULTILINE
)
_SECTION_RE = re.compile(r"^####\s*(Evaluation Name|Question|Reference Answer):\s*$", re.MULTILINE)


def generate_openqa(
    plan_item: EvaluationPlanItem,
    seed_chunk: str,
    gateway: Gateway,
    prompts: PromptLibrary | None = None,
    model: str = "",
) -> OpenQaItem | None:
    """Generator call; returns None when the reply flags insufficient
    grounding (the caller records the marker)."""
    prompts = prompts or PromptLibrary()
    user = (
        f"evaluation_plan:\n\n{json.dumps(plan_item.to_json(), indent=2)}\n\n"
        f"seed_data:\n\n{seed_chunk}"
    )
    reply = gateway.complete(
        ChatRequest.build(model, system=prompts.get("openqa_generator"), user=user)
    ).text
    item = parse_openqa_reply(reply)
    if item is not None:
        item.evaluation_name = item.evaluation_name or plan_item.evaluation_name
    return item


def parse_openqa_reply(reply: str) -> OpenQaItem | None:
    """Parse the generator's fixed layout.

    The sufficiency flag may sit on the header line or the next line;
    False yields None. Question and reference answer are taken verbatim,
    and an unsubstituted ``<CONTEXT>`` placeholder in the question is a
    parse error.
    """
    flag_match = _SUFFICIENCY_RE.search(reply)
    if not flag_match:
        raise ReplyParseError("missing sufficiency flag header", raw_reply=reply)
    flag = flag_match.group(1).strip().rstrip(".").lower()
    if not flag:
        after = reply[flag_match.end():].lstrip("\n").splitlines()
        flag = after[0].strip().rstrip(".").lower() if after else ""
    if flag == "false":
        return None
    if flag != "true":
        raise ReplyParseError(f"unparseable sufficiency flag {flag!r}", raw_reply=reply)

    sections: dict[str, str] = {}
    matches = list(_SECTION_RE.finditer(reply))
    for i, match in enumerate(matches):
        end = matches[i + 1].start() if i + 1 < len(matches) else len(reply)
        sections[match.group(1)] = reply[match.end() : end].strip()
    missing = [name for name in ("Question", "Reference Answer") if not sections.get(name)]
    if missing:
        raise ReplyParseError(f"missing section header(s): {', '.join(missing)}", raw_reply=reply)
    question = sections["Question"]
    if CONTEXT_PLACEHOLDER in question:
        raise ReplyParseError("question still contains the literal context placeholder",
                              raw_reply=reply)
    return OpenQaItem(
        evaluation_name=sections.get("Evaluation Name", ""),
        question=question,
        reference_answer=sections["Reference Answer"],
    )


_RESULT_RE = re.compile(r"^\s*-\s*Result:\s*(True|False)\s*$", re.IGNORECASE | re.MULTILINE)
_CHECK_HEADER_RE = re.compile(r"^\s*(\d{1,2})\.\s+(.+?):\s*$", re.MULTILINE)
_VERDICT_RE = re.compile(r"^Verdict:\s*\n?\s*(PASS|FAIL)\s*$", re.IGNORECASE | re.MULTILINE)
_QUALITY_RE = re.compile(r"OpenQA Quality Score:\s*(\d{1,2})")


def parse_verifier_reply(reply: str) -> VerifierRecord:
    """Parse one verifier checklist reply; anything unparseable (including
    an incomplete checklist) counts as FAIL with the parse reason."""
    checks: dict[str, bool] = {}
    headers = list(_CHECK_HEADER_RE.finditer(reply))
    for i, header in enumerate(headers):
        end = headers[i + 1].start() if i + 1 < len(headers) else len(reply)
        result = _RESULT_RE.search(reply, header.end(), end)
        if result:
            checks[header.group(2).strip()] = result.group(1).lower() == "true"
    if len(checks) != CHECKLIST_SIZE:
        return VerifierRecord(
            verdict="FAIL",
            checklist=checks,
            parse_failure=f"checklist incomplete: {len(checks)}/{CHECKLIST_SIZE} results",
        )
    verdict_match = _VERDICT_RE.search(reply)
    if not verdict_match:
        return VerifierRecord(verdict="FAIL", checklist=checks, parse_failure="missing verdict")
    score_match = _QUALITY_RE.search(reply)
    if not score_match or not 0 <= int(score_match.group(1)) <= 10:
        return VerifierRecord(
            verdict="FAIL", checklist=checks, parse_failure="missing or invalid quality score"
        )
    issues: list[str] = []
    issues_match = re.search(r"Issues:\s*\n(.*?)(?:\n\s*\nOpenQA Quality Score:|OpenQA Quality Score:)",
                             reply, re.DOTALL)
    if issues_match:
        issues = [
            line.strip().lstrip("- ").strip()
            for line in issues_match.group(1).splitlines()
            if line.strip() and line.strip().lower() != "none."
        ]
    return VerifierRecord(
        verdict=verdict_match.group(1).upper(),
        checklist=checks,
        issues=issues,
        score=int(score_match.group(1)),
    )


def verify_openqa(
    item: OpenQaItem,
    seed_chunk: str,
    verifier_gateways: tuple[Gateway, Gateway],
    prompts: PromptLibrary | None = None,
    model: str = "",
) -> ConsensusRecord:
    """Dual verification: both verifiers run concurrently, consensus is
    PASS only when both verdicts are PASS, consensus score is the
    minimum of the two."""
    if len(verifier_gateways) != 2:
        raise ValueError("exactly two verifier backends are required")
    prompts = prompts or PromptLibrary()
    user = (
        f"question:\n\n{item.question}\n\n"
        f"reference_answer:\n\n{item.reference_answer}\n\n"
        f"seed_data:\n\n{seed_chunk}"
    )
    request = ChatRequest.build(model, system=prompts.get("openqa_verifier"), user=user)

    def run(gw: Gateway) -> VerifierRecord:
        return parse_verifier_reply(gw.complete(request).text)

    with ThreadPoolExecutor(max_workers=2) as pool:
        records = list(pool.map(run, verifier_gateways))
    passed = all(r.passed for r in records)
    score = min(r.score for r in records)
    item.verifier_records = records
    item.quality_score = score
    return ConsensusRecord(records=records, passed=passed, score=score)
