"""A deterministic scripted backend that plays every agent role.

Replies are pure functions of the request, so pipeline runs through this
backend are bit-reproducible. Each role is recognized by a distinctive
substring of its system prompt and synthesizes a well-formed reply from
the seed material embedded in the user message.
"""

from __future__ import annotations

import hashlib
import re

from cyberforge.gateway import CandidateScore, ChatRequest, MockBackend, ScoreRequest


def stable_hash(text: str) -> int:
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(), "little")


_KEY_RE = re.compile(r"tool-[a-z]+-\d+")


def _seed_key(text: str) -> str:
    match = _KEY_RE.search(text)
    return match.group() if match else f"subject-{stable_hash(text) % 1000}"


def mcq_question_text(key: str, n: int) -> str:
    return f"What does the --mode{n} option of {key} control during a scan?"


def _plan_reply(user: str) -> str:
    key = _seed_key(user)
    return (
        '{"skill_sets": [{"name": "Usage Walkthrough", "augmentation_types": '
        f'[{{"type": "Guided {key} session", "description": "step by step"}}]}}]}}'
    )


def openqa_question_text(key: str) -> str:
    return f"Explain how to operate {key} end to end."


def _augment_reply(user: str) -> str:
    key = _seed_key(user)
    words = " ".join(re.findall(r"[a-z0-9-]+", user.lower())[:40])
    # the opening user turn is exactly the open-QA benchmark question for
    # this seed, so decontamination has guaranteed hits to remove
    blocks = [
        "<|start|>\n"
        f"<|title|>: Operating {key}\n"
        f"<|user|>: {openqa_question_text(key)}\n"
        f"<|assistant|>: Run {key} with its documented flags. {words}\n"
        f"<|user|>: What about verbose output for {key}?\n"
        f"<|assistant|>: Add the verbose flag to {key} and read the scan output. {words[:120]}\n"
        "<|end|>"
    ]
    # every third seed emits a conversation whose opening question is a
    # benchmark question verbatim, to exercise decontamination
    if stable_hash(key) % 3 == 0:
        blocks.append(
            "<|start|>\n"
            f"<|title|>: Quick question about {key}\n"
            f"<|user|>: {mcq_question_text(key, 1)}\n"
            f"<|assistant|>: The --mode1 option of {key} selects the scan mode. {words[:100]}\n"
            "<|end|>"
        )
    return "\n---\n".join(blocks)


def _mcq_generation_reply(user: str) -> str:
    key = _seed_key(user)
    out = []
    for n in (1, 2, 3):
        correct = "ABCD"[stable_hash(f"{key}:{n}") % 4]
        options = {letter: f"It sets behavior {letter}{n} of {key}." for letter in "ABCD"}
        options[correct] = f"It selects scan mode {n} for {key}."
        out.append(
            f"**Question {n}**\n"
            f"{mcq_question_text(key, n)}\n"
            + "\n".join(f"{letter}. {options[letter]}" for letter in "ABCD")
            + f"\n**Correct Answer**: {correct}\n"
            f"**Explanation**: Mode {n} is documented for {key}.\n"
        )
    return "\n".join(out)


_Q_RE = re.compile(r"Generated question:\n\n(.*?)\nA\. ", re.DOTALL)
_OPT_RE = re.compile(r"^([A-D])\. (.*)$", re.MULTILINE)
_SOL_RE = re.compile(r"\*\*Correct Answer\*\*: ([A-D])")


def _mcq_verifier_reply(user: str) -> str:
    import json

    question = _Q_RE.search(user).group(1).strip()
    options = dict(_OPT_RE.findall(user))
    solution = _SOL_RE.search(user).group(1)
    passed = stable_hash(question) % 10 != 0  # ~10% structural rejects
    obj = {
        "question": question,
        "answers": {k: options[k] for k in "ABCD"},
        "solution": solution,
        "explanation": "verified",
        "review_summary": "checklist complete",
        "passed": passed,
    }
    return (
        "---\n**Step1: QnA Review**\nlooks fine\n---\n\n"
        "---\n**Step2: Checklist**\n- Formatting: true\n---\n\n"
        "---\n**Step3: Summary**\nall good\n---\n\n"
        "---\n**Step4: Final Output**\n```json\n" + json.dumps(obj, indent=2) + "\n```"
    )


def _mcq_scorer_reply(user: str) -> str:
    score = 7 + stable_hash(user) % 4  # 7..10, half survive the s > 8 floor
    return f"Reasoned through clarity and correctness.\nScore: {score}/10"


def _openqa_planner_reply(user: str) -> str:
    key = _seed_key(user)
    return (
        "## Content Analysis and Evaluation Plan\n\nanalysis\n\n"
        "## Final Evaluation Plan\n\n```json\n"
        '{"evaluation_plan": [{"evaluation_name": "Procedure Synthesis", '
        f'"purpose": "test {key} operation", '
        f'"instruction_template": "Explain how to operate {key} end to end.", '
        '"answer_guideline": "covers flags and output", "context_excerpt": ""}]}\n```'
    )


def _openqa_generator_reply(user: str) -> str:
    key = _seed_key(user)
    return (
        "---\n### Analysis and Thinking\ngrounded\n\n"
        "### Sufficient Information for Grounded OpenQA:\nTrue\n\n"
        "### Final OpenQA:\n\n"
        "#### Evaluation Name:\nProcedure Synthesis\n\n"
        f"#### Question:\n{openqa_question_text(key)}\n\n"
        f"#### Reference Answer:\nInstall {key}, run it with its documented flags, "
        "then read the scan output carefully.\n"
    )


_CHECK_NAMES = [
    "Format & Parsing", "Self-Sufficiency of Question", "Clarity & Completeness of Question",
    "Meaningfulness for the Domain", "Alignment with Expected Answer Type",
    "No Unjustified Assumptions", "Reference Answer Quality", "Consistency & Accuracy",
    "Language & Readability", "No Redundancy", "No Answer Overleakage",
    "Factually Correct and Fully Grounded (if seed_data is present)",
]


def _openqa_verifier_reply(user: str, salt: str = "") -> str:
    fail = stable_hash(salt + user) % 8 == 0  # occasional single-verifier FAIL
    lines = ["Checklist Results"]
    for i, name in enumerate(_CHECK_NAMES, start=1):
        result = "False" if (fail and i == 11) else "True"
        lines.append(f"{i}. {name}:")
        lines.append("  - Reasoning: checked")
        lines.append(f"  - Result: {result}")
        lines.append("")
    lines.append("Verdict:")
    lines.append("FAIL" if fail else "PASS")
    lines.append("")
    lines.append("Issues:")
    lines.append("- question leaks the answer" if fail else "None.")
    lines.append("")
    lines.append(f"OpenQA Quality Score: {8 + stable_hash(user) % 3}")
    return "\n".join(lines)


def _judge_reply(user: str) -> str:
    correct = stable_hash(user) % 2 == 0
    score = 8 + stable_hash(user) % 3 if correct else stable_hash(user) % 4
    return (
        "<analysis>\ndeterministic mock judgment\n</analysis>\n\n"
        f"<correctness>\n{'True' if correct else 'False'}\n</correctness>\n\n"
        f"<score>\n{score}\n</score>"
    )


_ROLE_MARKERS = [
    ("skill sets", _plan_reply),
    ("training conversations", _augment_reply),
    ("closed-book multiple-choice", _mcq_generation_reply),
    ("review one generated multiple-choice", _mcq_verifier_reply),
    ("grade one verified multiple-choice", _mcq_scorer_reply),
    ("design open-ended evaluation items", _openqa_planner_reply),
    ("turn one evaluation plan", _openqa_generator_reply),
    ("audit one question/reference-answer", _openqa_verifier_reply),
    ("judge one model answer", _judge_reply),
]


def scripted_reply(request: ChatRequest, salt: str = "") -> str:
    system = request.messages[0].content if request.messages[0].role == "system" else ""
    user = request.messages[-1].content
    for marker, handler in _ROLE_MARKERS:
        if marker in system:
            if handler is _openqa_verifier_reply:
                return handler(user, salt)
            return handler(user)
    raise AssertionError(f"mock received unrecognized system prompt: {system[:80]}...")


def deterministic_scores(request: ScoreRequest) -> dict[str, CandidateScore]:
    return {
        cand: CandidateScore(-(stable_hash(request.prompt + "|" + cand) % 1000) / 100.0 - 0.01,
                             token_count=max(1, len(cand.split())))
        for cand in request.candidates
    }


def scripted_backend(salt: str = "") -> MockBackend:
    return MockBackend(
        reply_fn=lambda req: scripted_reply(req, salt),
        score_fn=deterministic_scores,
    )
