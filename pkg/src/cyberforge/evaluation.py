"""Model evaluation: MCQ option-logprob scoring, LLM-as-judge for open
QA, and the leaf/category/macro aggregation behind the reports.

Two MCQ scoring modes are supported: ``letter-token`` scores the four
single-letter continuations of the rendered prompt; ``normalized-option``
scores each full option text with length normalization. Macro accuracy
is the unweighted mean of the three category accuracies, each the
unweighted mean of its leaf accuracies.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import re
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path

from .documents import CATEGORY_LEAVES, LEAF_ORDER, TaxonomyPath
from .bench.mcq import LETTERS, McqItem
from .bench.openqa import OpenQaItem
from .gateway import ChatRequest, Gateway, ScoreRequest, pick_best
from .prompts import PromptLibrary

__all__ = [
    "MCQ_PROMPT_TEMPLATE",
    "LEAF_LABELS",
    "McqPrediction",
    "JudgeVerdict",
    "JudgeFailure",
    "EvalReport",
    "OpenQaReport",
    "render_mcq_prompt",
    "score_mcq",
    "judge_openqa",
    "aggregate_mcq",
    "aggregate_openqa",
    "emit_report",
]

logger = logging.getLogger(__name__)

MCQ_PROMPT_TEMPLATE = (
    "You are given multiple choice questions. "
    "Answer with the option letter (A, B, C, D) from the given choices directly.\n"
    "Question: {question}\n"
    "A. {option_a}\n"
    "B. {option_b}\n"
    "C. {option_c}\n"
    "D. {option_d}\n"
    "Answer:"
)

LEAF_LABELS: dict[tuple[str, str], str] = {
    ("knowledge", "general"): "Gen",
    ("knowledge", "frameworks"): "Frm",
    ("skill", "offensive"): "Off",
    ("tools", "cli"): "CLI",
    ("tools", "kali"): "Kali",
}


def render_mcq_prompt(item: McqItem) -> str:
    """Bit-exact instantiation of the MCQ evaluation template."""
    return MCQ_PROMPT_TEMPLATE.format(
        question=item.question,
        option_a=item.answers["A"],
        option_b=item.answers["B"],
        option_c=item.answers["C"],
        option_d=item.answers["D"],
    )


@dataclass
class McqPrediction:
    item_id: str
    predicted: str
    logprobs: dict[str, float]
    mode: str
    solution: str = ""
    taxonomy: TaxonomyPath | None = None
    failed: bool = False
    failure: str = ""
    latency_s: float = 0.0

    @property
    def correct(self) -> bool:
        return not self.failed and self.predicted == self.solution

    def to_json(self) -> dict:
        return {
            "item_id": self.item_id,
            "predicted": self.predicted,
            "logprobs": self.logprobs,
            "mode": self.mode,
            "solution": self.solution,
            "correct": self.correct,
            "failed": self.failed,
            "failure": self.failure,
            "latency_s": round(self.latency_s, 6),
        }


def score_mcq(
    items: list[McqItem],
    gateway: Gateway,
    mode: str = "letter-token",
    exclude_failures: bool = False,
) -> tuple[list[McqPrediction], float]:
    """Score items and return (predictions, accuracy in percent).

    Per-item gateway failures are recorded and count as wrong unless
    ``exclude_failures`` removes them from the denominator.
    """
    if mode not in ("letter-token", "normalized-option"):
        raise ValueError(f"unknown scoring mode {mode!r}")
    predictions: list[McqPrediction] = []
    for item in items:
        prompt = render_mcq_prompt(item)
        started = time.perf_counter()
        try:
            if mode == "letter-token":
                by_letter = gateway.score_candidates(ScoreRequest(prompt, LETTERS))
            else:
                texts = [item.answers[letter] for letter in LETTERS]
                unique = tuple(dict.fromkeys(texts))
                scored = gateway.score_candidates(
                    ScoreRequest(prompt, unique), normalize=True
                )
                by_letter = {letter: scored[item.answers[letter]] for letter in LETTERS}
        except Exception as exc:  # noqa: BLE001 - per-item isolation
            predictions.append(
                McqPrediction(
                    item_id=item.id, predicted="", logprobs={}, mode=mode,
                    solution=item.solution, taxonomy=item.taxonomy,
                    failed=True, failure=str(exc),
                    latency_s=time.perf_counter() - started,
                )
            )
            continue
        predictions.append(
            McqPrediction(
                item_id=item.id,
                predicted=pick_best(by_letter),
                logprobs=dict(by_letter),
                mode=mode,
                solution=item.solution,
                taxonomy=item.taxonomy,
                latency_s=time.perf_counter() - started,
            )
        )
    scoreable = [p for p in predictions if not (exclude_failures and p.failed)]
    accuracy = 100.0 * sum(p.correct for p in scoreable) / len(scoreable) if scoreable else 0.0
    return predictions, accuracy


@dataclass
class JudgeVerdict:
    analysis: str
    correctness: bool
    score: int
    consistency_flag: bool = False
    taxonomy: TaxonomyPath | None = None
    item_id: str = ""

    def to_json(self) -> dict:
        return {
            "item_id": self.item_id,
            "analysis": self.analysis,
            "correctness": self.correctness,
            "score": self.score,
            "consistency_flag": self.consistency_flag,
        }


class JudgeFailure(RuntimeError):
    """Judge reply unusable after retry; the item counts as incorrect and
    is excluded from score statistics."""


_TAG_RES = {
    "analysis": re.compile(r"<analysis>(.*?)</analysis>", re.DOTALL),
    "correctness": re.compile(r"<correctness>(.*?)</correctness>", re.DOTALL),
    "score": re.compile(r"<score>(.*?)</score>", re.DOTALL),
}


def _parse_judge_reply(reply: str) -> tuple[str, bool, int]:
    parts = {}
    for name, pattern in _TAG_RES.items():
        match = pattern.search(reply)
        if not match:
            raise JudgeFailure(f"missing <{name}> tag")
        parts[name] = match.group(1).strip()
    correctness_raw = parts["correctness"].lower()
    if correctness_raw not in ("true", "false"):
        raise JudgeFailure(f"unparseable correctness {parts['correctness']!r}")
    score_match = re.search(r"-?\d+", parts["score"])
    if not score_match:
        raise JudgeFailure(f"unparseable score {parts['score']!r}")
    score = int(score_match.group())
    if not 0 <= score <= 10:
        raise JudgeFailure(f"score {score} out of [0, 10]")
    return parts["analysis"], correctness_raw == "true", score


def judge_openqa(
    item: OpenQaItem,
    model_answer: str,
    gateway: Gateway,
    prompts: PromptLibrary | None = None,
    model: str = "",
) -> JudgeVerdict:
    """Reference-based judging of one model answer.

    Tag parse failures get one retry, then raise :class:`JudgeFailure`.
    A verdict that is incorrect yet scores above 3 is re-asked once; if
    the judge stays inconsistent the score is clamped to 3 and the
    verdict flagged.
    """
    if not model_answer.strip():
        raise ValueError("model answer must be nonempty")
    prompts = prompts or PromptLibrary()
    user = prompts.get("judge_user_template").format(
        question=item.question,
        reference_answer=item.reference_answer,
        model_answer=model_answer,
    )
    system = prompts.get("judge_system")

    def ask(nudge: str = "") -> tuple[str, bool, int]:
        reply = gateway.complete(
            ChatRequest.build(model, system=system, user=user + nudge)
        ).text
        return _parse_judge_reply(reply)

    try:
        analysis, correctness, score = ask()
    except JudgeFailure:
        analysis, correctness, score = ask(
            "\n\n(Reminder: reply with exactly the three tagged blocks.)"
        )

    consistency_flag = False
    if not correctness and score > 3:
        try:
            analysis, correctness, score = ask(
                "\n\n(Reminder: when correctness is False the score must be 3 or lower.)"
            )
        except JudgeFailure:
            pass
        if not correctness and score > 3:
            score = 3
            consistency_flag = True
    return JudgeVerdict(
        analysis=analysis,
        correctness=correctness,
        score=score,
        consistency_flag=consistency_flag,
        taxonomy=item.taxonomy,
        item_id=item.id,
    )


def _leaf_label(taxonomy: TaxonomyPath) -> str:
    return LEAF_LABELS[(taxonomy.category, taxonomy.leaf)]


@dataclass
class EvalReport:
    leaf_accuracy: dict[str, float] = field(default_factory=dict)  # label -> percent
    category_accuracy: dict[str, float] = field(default_factory=dict)
    macro_accuracy: float = 0.0
    leaf_counts: dict[str, int] = field(default_factory=dict)
    empty_leaves: list[str] = field(default_factory=list)
    model: str = ""

    @classmethod
    def from_leaf_accuracy(cls, leaf_accuracy: dict[str, float], model: str = "",
                           leaf_counts: dict[str, int] | None = None) -> "EvalReport":
        """Aggregate from per-leaf accuracies (percent), keyed by leaf
        label (Gen, Frm, Off, CLI, Kali) or by "category/leaf" path."""
        normalized: dict[str, float] = {}
        for key, value in leaf_accuracy.items():
            if "/" in key:
                key = _leaf_label(TaxonomyPath.parse(key))
            normalized[key] = value
        report = cls(leaf_accuracy=normalized, model=model,
                     leaf_counts=dict(leaf_counts or {}))
        report._aggregate()
        return report

    def _aggregate(self) -> None:
        category_values: dict[str, list[float]] = {}
        for (category, leaf) in LEAF_ORDER:
            label = LEAF_LABELS[(category, leaf)]
            if label in self.leaf_accuracy:
                category_values.setdefault(category, []).append(self.leaf_accuracy[label])
            else:
                self.empty_leaves.append(label)
        self.category_accuracy = {
            category: sum(values) / len(values)
            for category, values in category_values.items()
        }
        if self.category_accuracy:
            self.macro_accuracy = sum(self.category_accuracy.values()) / len(
                self.category_accuracy
            )

    def to_json(self) -> dict:
        return {
            "model": self.model,
            "macro_accuracy": self.macro_accuracy,
            "category_accuracy": self.category_accuracy,
            "leaf_accuracy": self.leaf_accuracy,
            "leaf_counts": self.leaf_counts,
            "empty_leaves": self.empty_leaves,
        }


def aggregate_mcq(predictions: list[McqPrediction], model: str = "") -> EvalReport:
    """Leaf accuracy -> category mean -> macro mean. Every prediction
    must carry a taxonomy; empty leaves are skipped and flagged."""
    correct: dict[str, int] = {}
    totals: dict[str, int] = {}
    for pred in predictions:
        if pred.taxonomy is None:
            raise ValueError(f"prediction {pred.item_id} lacks a taxonomy")
        label = _leaf_label(pred.taxonomy)
        totals[label] = totals.get(label, 0) + 1
        if pred.correct:
            correct[label] = correct.get(label, 0) + 1
    leaf_accuracy = {
        label: 100.0 * correct.get(label, 0) / totals[label] for label in totals
    }
    return EvalReport.from_leaf_accuracy(leaf_accuracy, model=model, leaf_counts=totals)


@dataclass
class OpenQaReport:
    mean_correctness: dict[str, float] = field(default_factory=dict)  # category -> percent
    score_stats: dict[str, dict] = field(default_factory=dict)
    judge_failures: int = 0
    model: str = ""

    def to_json(self) -> dict:
        return {
            "model": self.model,
            "mean_correctness": self.mean_correctness,
            "score_stats": self.score_stats,
            "judge_failures": self.judge_failures,
        }


def _score_summary(scores: list[int]) -> dict:
    ordered = sorted(scores)
    deciles = [
        ordered[min(len(ordered) - 1, int(q * len(ordered) / 10))] for q in range(1, 10)
    ]
    return {
        "mean": statistics.fmean(ordered),
        "median": statistics.median(ordered),
        "deciles": deciles,
        "count": len(ordered),
    }


def aggregate_openqa(
    verdicts: list[JudgeVerdict], failures: list[TaxonomyPath] | None = None, model: str = ""
) -> OpenQaReport:
    """Per-category mean correctness and score distributions.

    Judge failures count as incorrect for mean correctness but are
    excluded from score statistics.
    """
    failures = failures or []
    correct: dict[str, int] = {}
    totals: dict[str, int] = {}
    scores: dict[str, list[int]] = {}
    for verdict in verdicts:
        if verdict.taxonomy is None:
            raise ValueError(f"verdict {verdict.item_id} lacks a taxonomy")
        category = verdict.taxonomy.category
        totals[category] = totals.get(category, 0) + 1
        if verdict.correctness:
            correct[category] = correct.get(category, 0) + 1
        scores.setdefault(category, []).append(verdict.score)
    for taxonomy in failures:
        totals[taxonomy.category] = totals.get(taxonomy.category, 0) + 1
    report = OpenQaReport(model=model, judge_failures=len(failures))
    report.mean_correctness = {
        category: 100.0 * correct.get(category, 0) / totals[category] for category in totals
    }
    report.score_stats = {
        category: _score_summary(values) for category, values in scores.items()
    }
    return report


_MD_COLUMNS = ("Macro", "Gen", "Frm", "Off", "CLI", "Kali")


def _category_of_label(label: str) -> str:
    for (category, leaf), lab in LEAF_LABELS.items():
        if lab == label:
            return category
    raise KeyError(label)


def emit_report(report: EvalReport, fmt: str, path: str | Path) -> Path:
    """Write a report as lossless JSON, one-metric-per-row CSV, or a
    Markdown table with the Macro/Gen/Frm/Off/CLI/Kali column order."""
    path = Path(path)
    if fmt == "json":
        path.write_text(json.dumps(report.to_json(), indent=2) + "\n", encoding="utf-8")
    elif fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["model", "metric", "value"])
        if report.leaf_accuracy or report.category_accuracy:
            writer.writerow([report.model, "macro", f"{report.macro_accuracy:.2f}"])
        for category in CATEGORY_LEAVES:
            if category in report.category_accuracy:
                writer.writerow(
                    [report.model, f"category:{category}",
                     f"{report.category_accuracy[category]:.2f}"]
                )
        for label in _MD_COLUMNS[1:]:
            if label in report.leaf_accuracy:
                writer.writerow(
                    [report.model, f"leaf:{label}", f"{report.leaf_accuracy[label]:.2f}"]
                )
        path.write_text(buf.getvalue(), encoding="utf-8")
    elif fmt == "markdown":
        header = "| Model | " + " | ".join(_MD_COLUMNS) + " |"
        sep = "|---" * (len(_MD_COLUMNS) + 1) + "|"
        cells = [f"{report.macro_accuracy:.2f}"] + [
            f"{report.leaf_accuracy[label]:.2f}" if label in report.leaf_accuracy else "-"
            for label in _MD_COLUMNS[1:]
        ]
        row = f"| {report.model or '(model)'} | " + " | ".join(cells) + " |"
        path.write_text("\n".join([header, sep, row]) + "\n", encoding="utf-8")
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    return path


def load_report(path: str | Path) -> EvalReport:
    """Inverse of the JSON emit."""
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    return EvalReport(
        leaf_accuracy=obj.get("leaf_accuracy", {}),
        category_accuracy=obj.get("category_accuracy", {}),
        macro_accuracy=obj.get("macro_accuracy", 0.0),
        leaf_counts=obj.get("leaf_counts", {}),
        empty_leaves=obj.get("empty_leaves", []),
        model=obj.get("model", ""),
    )
