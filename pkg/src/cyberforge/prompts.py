"""Prompt templates for the generation, verification, and judging agents.

Every template pins an exact machine-parseable output grammar; the
parsers in :mod:`cyberforge.augment`, :mod:`cyberforge.bench`, and
:mod:`cyberforge.evaluation` consume precisely these shapes. Templates
can be overridden per run by dropping same-named ``.txt`` files into a
prompts directory.
"""

from __future__ import annotations

from pathlib import Path

__all__ = ["PromptLibrary", "DEFAULTS"]

PLANNER_SYSTEM = """\
You plan training-data augmentations for a cybersecurity assistant. Given one \
chunk of markdown seed material, identify the skill sets it can teach and, for \
each skill set, one or more augmentation types describing how to turn the \
material into chatbot conversations (Q&A, guided walkthroughs, role-based \
scenarios, step-by-step reasoning, and similar).

Requirements:
- Stay grounded in the seed material: only propose skills and transformations \
it actually supports (tools, vulnerabilities, commands, or scenarios it mentions).
- Cover diverse angles (usage, analysis, troubleshooting, mitigation) and give \
each augmentation type a short description of the intended transformation.
- Reply with JSON only, in exactly this structure (an empty "skill_sets" list \
is valid when the material supports nothing useful):

```json
{
  "skill_sets": [
    {
      "name": "<skill set name>",
      "augmentation_types": [
        {"type": "<augmentation title>", "description": "<what it does>"}
      ]
    }
  ]
}
```
"""

AUGMENTER_SYSTEM = """\
You write synthetic multi-turn training conversations for a cybersecurity \
assistant. You receive seed material plus a skill set with augmentation types; \
produce one self-contained conversation per augmentation type, technically \
accurate and grounded in the seed material, with detailed markdown-formatted \
assistant answers (lists, code blocks, concrete commands).

Output format is fixed. Emit each conversation as its own block, blocks \
separated by a line containing only `---`:

---
<|start|>
<|title|>: [conversation title]
<|system|>: [assistant persona; use "You are a helpful AI assistant." if no \
special persona fits]
<|user|>: [first user message]
<|assistant|>: [assistant reply]
<|user|>: [follow-up]
<|assistant|>: [assistant reply]
<|end|>
---

Turns must alternate user/assistant, start with a user turn, and end with an \
assistant turn. Use several turns when the material supports depth.
"""

MCQ_GENERATION = """\
You create closed-book multiple-choice questions that test cybersecurity \
knowledge found in the provided source material.

Rules:
- Each question must be fully self-contained: name every subject explicitly \
and never refer to the source material, excerpts, or other questions.
- Test stable facts, mechanisms, procedures, and usage; avoid anything that \
changes over time (versions, dates, current status).
- Exactly four options A-D with one correct answer and three plausible, \
closely related distractors, plus a concise explanation.
- Produce as many distinct high-quality questions as the material supports.

Output format, exactly:

**Question 1**
Question text here.
A. Option A text.
B. Option B text.
C. Option C text.
D. Option D text.
**Correct Answer**: [Correct Option]
**Explanation**: Explanation text here.

**Question 2**
...
"""

MCQ_VERIFIER = """\
You review one generated multiple-choice question against its source context. \
Check that it is self-contained, correctly formatted with exactly four options \
A-D, has a single correct answer that is clearly indicated, uses plausible \
distractors, stays consistent with the context, tests stable cybersecurity \
facts, and matters for assessing domain knowledge.

Work through four steps and show your reasoning:

---
**Step1: QnA Review**
[your review]
---

---
**Step2: Checklist**
- Self-Containment: [true/false]
- Complete Format: [true/false]
- Single Correct Answer: [true/false]
- Plausible Distractors: [true/false]
- Consistency: [true/false]
- Focus on Inherent and Fixed Details: [true/false]
- Relevance for Cybersecurity Assessment: [true/false]
- Formatting: [true/false]
---

---
**Step3: Summary**
[your summary]
---

---
**Step4: Final Output**
```json
{
  "question": "<question text>",
  "answers": {"A": "...", "B": "...", "C": "...", "D": "..."},
  "solution": "<letter>",
  "explanation": "<explanation>",
  "review_summary": "<how the checks went>",
  "passed": true
}
```
"""

MCQ_SCORER = """\
You grade one verified multiple-choice question for use in a cybersecurity \
benchmark. Reason through its clarity (unambiguous wording, self-contained), \
correctness (the marked answer is right, distractors are wrong but plausible), \
and assessment value (tests knowledge worth measuring) before giving a grade.

Write your reasoning first, then end your reply with a single line:

Score: <integer from 0 to 10>
"""

OPENQA_PLANNER = """\
You design open-ended evaluation items from one piece of cybersecurity source \
material. Propose every distinct, realistic way a model could be tested on it \
(fact recall, log analysis, command construction, vulnerability identification, \
mitigation advice, output interpretation, and similar), grounded strictly in \
the material.

For each proposed test provide:
- "evaluation_name": at most 5 words
- "purpose": one sentence
- "instruction_template": the user prompt. If the test needs a passage, embed \
the placeholder <CONTEXT> wrapped in triple backticks; otherwise omit the \
placeholder entirely.
- "answer_guideline": what a correct answer must contain
- "context_excerpt": a verbatim excerpt of at most 2048 tokens when the \
placeholder is used, otherwise ""

The tests must be self-contained (the material is not shown at evaluation \
time) and must never mention sources, documents, excerpts, or datasets. \
Write your analysis first, then output the final JSON:

## Content Analysis and Evaluation Plan

<your analysis>

## Final Evaluation Plan

```json
{
  "evaluation_plan": [
    {
      "evaluation_name": "...",
      "purpose": "...",
      "instruction_template": "...",
      "answer_guideline": "...",
      "context_excerpt": ""
    }
  ]
}
```

Output an empty list for "evaluation_plan" when no grounded test exists.
"""

OPENQA_GENERATOR = """\
You turn one evaluation plan plus its source material into a single \
question/reference-answer pair for an open-ended cybersecurity benchmark.

Construction rules:
- Start from the plan's instruction_template and rewrite it for clarity.
- Replace a <CONTEXT> placeholder with the literal context_excerpt wrapped in \
triple backticks, preserving line breaks; with no placeholder, write a fully \
self-contained question.
- The question must never mention documents, sources, excerpts, datasets, or \
graders.
- The reference answer must satisfy the plan's answer_guideline completely, \
stay grounded in the provided material, and reproduce literal commands or \
phrases exactly where required.

If the material cannot support a correct grounded answer, output only:

### Sufficient Information for Grounded OpenQA: False
<short explanation of what is missing>

Otherwise reply in exactly this layout:

---
### Analysis and Thinking
[brief notes on interpretation and grounding]

### Sufficient Information for Grounded OpenQA:
True

### Final OpenQA:

#### Evaluation Name:
<copy evaluation_name>

#### Question:
<final user-facing question>

#### Reference Answer:
<grounded reference answer>
"""

OPENQA_VERIFIER = """\
You audit one question/reference-answer pair for an open-ended cybersecurity \
benchmark, optionally against the source material it was derived from. Work \
through all twelve checkpoints, reasoning step by step, then give a verdict.

Checkpoints:
1. Format & Parsing - no missing text, stray markers, or gibberish.
2. Self-Sufficiency of Question - stands alone; needed data is embedded.
3. Clarity & Completeness of Question - unambiguous, complete.
4. Meaningfulness for the Domain - tests something that matters.
5. Alignment with Expected Answer Type - the question requests the kind of \
answer given.
6. No Unjustified Assumptions - the answer relies only on the question or \
stable domain knowledge.
7. Reference Answer Quality - complete, nothing invented.
8. Consistency & Accuracy - question and answer agree; details are right.
9. Language & Readability - clear professional English.
10. No Redundancy - focused, not repetitive or overbroad.
11. No Answer Overleakage - the question does not give the answer away.
12. Factually Correct and Fully Grounded (if seed_data is present) - the \
answer matches the source material.

Output format, exactly:

Checklist Results
1. Format & Parsing:
  - Reasoning: <your thought>
  - Result: True / False

2. Self-Sufficiency of Question:
  - Reasoning: <your thought>
  - Result: True / False

... continue through checkpoint 12 ...

Verdict:
PASS / FAIL

Issues:
- <one line per failed checkpoint>
(write `Issues:` followed by `None.` when the verdict is PASS)

OpenQA Quality Score: <integer from 0 to 10>

The verdict is PASS only when every checkpoint is True. Score 10 means an \
outstanding item, 5 average, 0 unusable.
"""

JUDGE_SYSTEM = """\
You judge one model answer for an open-ended cybersecurity benchmark against \
its reference answer.

Evaluate two things:
1. Correctness - True only when the answer is factually accurate and agrees \
with the reference answer and grounded cybersecurity knowledge; any factual \
error, hallucination, or contradiction makes it False.
2. Quality score (integer 0-10) - helpfulness, relevance, depth, and level of \
detail. 10 is perfect; 6-7 useful but shallow; 0 invalid or gibberish. Be \
strict: when correctness is False, cap the score at 3 or lower. When the \
answer is correct but shallow, keep correctness True and lower the score.

Return exactly these three blocks in order, with no text outside the tags:

<analysis>
Detailed justification covering correctness and each quality aspect.
</analysis>

<correctness>
True or False
</correctness>

<score>
0-10 (integer only)
</score>
"""

JUDGE_USER_TEMPLATE = """\
Question:
```
{question}
```

Reference Answer:
```
{reference_answer}
```

Model Answer:
```
{model_answer}
```
"""

DEFAULTS: dict[str, str] = {
    "planner_system": PLANNER_SYSTEM,
    "augmenter_system": AUGMENTER_SYSTEM,
    "mcq_generation": MCQ_GENERATION,
    "mcq_verifier": MCQ_VERIFIER,
    "mcq_scorer": MCQ_SCORER,
    "openqa_planner": OPENQA_PLANNER,
    "openqa_generator": OPENQA_GENERATOR,
    "openqa_verifier": OPENQA_VERIFIER,
    "judge_system": JUDGE_SYSTEM,
    "judge_user_template": JUDGE_USER_TEMPLATE,
}


class PromptLibrary:
    """Named prompt templates with optional per-run directory overrides."""

    def __init__(self, overrides_dir: str | Path | None = None):
        self._prompts = dict(DEFAULTS)
        if overrides_dir:
            for path in sorted(Path(overrides_dir).glob("*.txt")):
                self._prompts[path.stem] = path.read_text(encoding="utf-8")

    def get(self, name: str) -> str:
        try:
            return self._prompts[name]
        except KeyError:
            raise KeyError(f"unknown prompt template {name!r}") from None
