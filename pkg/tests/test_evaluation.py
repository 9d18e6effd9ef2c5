"""Evaluation tests: MCQ prompt rendering, both scoring modes, judge
parsing with the clamp rule, and the leaf/category/macro aggregation."""

import json
from pathlib import Path

import pytest

from cyberforge.bench.mcq import McqItem
from cyberforge.bench.openqa import OpenQaItem
from cyberforge.documents import TaxonomyPath
from cyberforge.evaluation import (
    EvalReport,
    JudgeFailure,
    JudgeVerdict,
    aggregate_mcq,
    aggregate_openqa,
    emit_report,
    judge_openqa,
    load_report,
    render_mcq_prompt,
    score_mcq,
)
from cyberforge.gateway import CandidateScore, Gateway, MockBackend

FIXTURES = Path(__file__).parent / "fixtures"


def fixture(name):
    return (FIXTURES / name).read_text(encoding="utf-8")


def make_item(solution="B", taxonomy=None, qid="item-1", answers=None):
    return McqItem(
        id=qid,
        question="What does a firewall primarily do?",
        answers=answers or {
            "A": "Monitor user activity",
            "B": "Filter incoming and outgoing network traffic",
            "C": "Encrypt data transmissions",
            "D": "Manage passwords",
        },
        solution=solution,
        taxonomy=taxonomy or TaxonomyPath("knowledge", "general"),
    )


# -- prompt rendering -----------------------------------------------------------


def test_render_template_exact():
    prompt = render_mcq_prompt(make_item())
    assert prompt == (
        "You are given multiple choice questions. "
        "Answer with the option letter (A, B, C, D) from the given choices directly.\n"
        "Question: What does a firewall primarily do?\n"
        "A. Monitor user activity\n"
        "B. Filter incoming and outgoing network traffic\n"
        "C. Encrypt data transmissions\n"
        "D. Manage passwords\n"
        "Answer:"
    )


def test_render_preserves_newlines_in_options():
    item = make_item(answers={"A": "line one\nline two", "B": "b", "C": "c", "D": "d"})
    prompt = render_mcq_prompt(item)
    assert "A. line one\nline two\nB. b\n" in prompt


def test_render_deterministic():
    item = make_item()
    assert render_mcq_prompt(item) == render_mcq_prompt(item)


# -- MCQ scoring -------------------------------------------------------------------


def letter_backend(logprob_map):
    def score_fn(req):
        return {c: CandidateScore(logprob_map[c]) for c in req.candidates}

    return Gateway(MockBackend(score_fn=score_fn))


def test_letter_mode_correct_prediction():
    gw = letter_backend({"A": -2.0, "B": -1.0, "C": -3.0, "D": -4.0})
    predictions, accuracy = score_mcq([make_item(solution="B")], gw)
    assert predictions[0].predicted == "B"
    assert predictions[0].correct
    assert accuracy == 100.0


def test_accuracy_three_of_four():
    gw = letter_backend({"A": -1.0, "B": -2.0, "C": -3.0, "D": -4.0})
    items = [make_item(solution=s, qid=f"i{n}") for n, s in enumerate("AAAB")]
    predictions, accuracy = score_mcq(items, gw)
    assert accuracy == 75.0
    assert [p.correct for p in predictions] == [True, True, True, False]


def test_normalized_mode_diverges_from_raw_sum():
    """Fixture where raw-sum argmax and normalized argmax differ; the
    normalized winner must be selected, matching hand arithmetic."""
    item = make_item(
        answers={"A": "tiny", "B": "a substantially longer option text", "C": "c", "D": "d"},
        solution="B",
    )

    def score_fn(req):
        table = {
            "tiny": CandidateScore(-1.0, token_count=1),
            "a substantially longer option text": CandidateScore(-3.0, token_count=6),
            "c": CandidateScore(-4.0, token_count=1),
            "d": CandidateScore(-5.0, token_count=1),
        }
        return {c: table[c] for c in req.candidates}

    gw = Gateway(MockBackend(score_fn=score_fn))
    predictions, _ = score_mcq([item], gw, mode="normalized-option")
    # raw sums: A -1 (winner); normalized: A -1.0, B -0.5 (winner)
    assert predictions[0].predicted == "B"
    assert predictions[0].logprobs["B"] == pytest.approx(-0.5)


def test_failed_items_count_wrong_by_default():
    gw = Gateway(MockBackend())  # no score_fn -> CapabilityError per item
    predictions, accuracy = score_mcq([make_item()], gw)
    assert predictions[0].failed
    assert accuracy == 0.0
    _, accuracy_excl = score_mcq([make_item()], gw, exclude_failures=True)
    assert accuracy_excl == 0.0  # no scoreable items


def test_permutation_invariance():
    gw = letter_backend({"A": -1.0, "B": -2.0, "C": -3.0, "D": -4.0})
    items = [make_item(solution=s, qid=f"i{n}") for n, s in enumerate("ABCDAB")]
    _, forward = score_mcq(items, gw)
    _, backward = score_mcq(list(reversed(items)), gw)
    assert forward == backward


# -- judge -------------------------------------------------------------------------


def qa_item(taxonomy=None):
    return OpenQaItem(
        id="qa-1",
        evaluation_name="Command-Line Construction",
        question="Construct the koadic command with autorun and restore.",
        reference_answer="koadic --autorun autorun_commands.txt --restore restore_data.json",
        taxonomy=taxonomy or TaxonomyPath("tools", "kali"),
    )


def gateway_replying(text):
    return Gateway(MockBackend(reply_fn=lambda req: text))


def test_judge_fixture_true_ten():
    verdict = judge_openqa(qa_item(), "model answer", gateway_replying(fixture("judge_reply_pass.txt")))
    assert verdict.correctness is True
    assert verdict.score == 10
    assert not verdict.consistency_flag
    assert verdict.analysis.startswith("The model answer provided is not only factually correct")


def test_judge_fixture_false_three():
    verdict = judge_openqa(qa_item(), "model answer", gateway_replying(fixture("judge_reply_fail.txt")))
    assert verdict.correctness is False
    assert verdict.score == 3
    assert not verdict.consistency_flag


def test_judge_inconsistent_clamped_with_flag():
    reply = "<analysis>capable but wrong flag</analysis>\n<correctness>False</correctness>\n<score>7</score>"
    verdict = judge_openqa(qa_item(), "answer", gateway_replying(reply))
    assert verdict.correctness is False
    assert verdict.score == 3
    assert verdict.consistency_flag


def test_judge_reask_can_fix_inconsistency():
    bad = "<analysis>a</analysis>\n<correctness>False</correctness>\n<score>7</score>"
    good = "<analysis>a</analysis>\n<correctness>False</correctness>\n<score>2</score>"
    backend = MockBackend(script=[bad, good])
    verdict = judge_openqa(qa_item(), "answer", Gateway(backend))
    assert backend.calls == 2
    assert verdict.score == 2
    assert not verdict.consistency_flag


def test_judge_missing_tag_retry_then_failure():
    backend = MockBackend(script=["no tags", "still no tags"])
    with pytest.raises(JudgeFailure):
        judge_openqa(qa_item(), "answer", Gateway(backend))
    assert backend.calls == 2


def test_judge_case_insensitive_correctness():
    reply = "<analysis>a</analysis>\n<correctness>true</correctness>\n<score>8</score>"
    assert judge_openqa(qa_item(), "answer", gateway_replying(reply)).correctness is True


def test_judge_empty_answer_rejected():
    with pytest.raises(ValueError):
        judge_openqa(qa_item(), "   ", gateway_replying("x"))


def test_stored_score_never_exceeds_three_when_incorrect():
    for raw_score in (0, 2, 3, 4, 9, 10):
        reply = f"<analysis>a</analysis>\n<correctness>False</correctness>\n<score>{raw_score}</score>"
        verdict = judge_openqa(qa_item(), "answer", gateway_replying(reply))
        assert verdict.score <= 3


# -- aggregation ---------------------------------------------------------------------


INS_LEAVES = {"Gen": 84.20, "Frm": 84.98, "Off": 89.06, "CLI": 86.80, "Kali": 80.30}


def test_macro_from_reported_leaf_accuracies():
    assert EvalReport.from_leaf_accuracy(INS_LEAVES).macro_accuracy == pytest.approx(85.73, abs=0.01)
    qwen = {"Gen": 80.46, "Frm": 78.82, "Off": 86.16, "CLI": 83.92, "Kali": 75.56}
    assert EvalReport.from_leaf_accuracy(qwen).macro_accuracy == pytest.approx(81.85, abs=0.01)
    base = {"Gen": 83.08, "Frm": 81.94, "Off": 88.23, "CLI": 85.08, "Kali": 78.86}
    assert EvalReport.from_leaf_accuracy(base).macro_accuracy == pytest.approx(84.24, abs=0.01)


def test_macro_identity_category_means():
    report = EvalReport.from_leaf_accuracy(INS_LEAVES)
    assert report.category_accuracy["knowledge"] == pytest.approx((84.20 + 84.98) / 2)
    assert report.category_accuracy["skill"] == pytest.approx(89.06)
    assert report.category_accuracy["tools"] == pytest.approx((86.80 + 80.30) / 2)


def test_all_leaves_equal_macro_equal():
    report = EvalReport.from_leaf_accuracy({k: 77.7 for k in INS_LEAVES})
    assert report.macro_accuracy == pytest.approx(77.7)


def test_aggregate_from_predictions():
    from cyberforge.evaluation import McqPrediction

    predictions = []
    for (category, leaf), label_acc in [
        (("knowledge", "general"), 0.5), (("knowledge", "frameworks"), 1.0),
        (("skill", "offensive"), 0.75), (("tools", "cli"), 0.25), (("tools", "kali"), 1.0),
    ]:
        taxonomy = TaxonomyPath(category, leaf)
        for i in range(4):
            correct = i < label_acc * 4
            predictions.append(
                McqPrediction(item_id=f"{leaf}{i}", predicted="A" if correct else "B",
                              logprobs={}, mode="letter-token", solution="A",
                              taxonomy=taxonomy)
            )
    report = aggregate_mcq(predictions, model="m")
    assert report.leaf_accuracy == {"Gen": 50.0, "Frm": 100.0, "Off": 75.0,
                                    "CLI": 25.0, "Kali": 100.0}
    assert report.macro_accuracy == pytest.approx((75.0 + 75.0 + 62.5) / 3)


def test_empty_leaf_flagged_category_over_present():
    report = EvalReport.from_leaf_accuracy({"Gen": 80.0, "Off": 90.0, "CLI": 70.0, "Kali": 70.0})
    assert report.empty_leaves == ["Frm"]
    assert report.category_accuracy["knowledge"] == 80.0
    assert report.macro_accuracy == pytest.approx((80.0 + 90.0 + 70.0) / 3)


def test_aggregate_openqa_counts_failures_incorrect():
    verdicts = [
        JudgeVerdict(analysis="", correctness=True, score=9,
                     taxonomy=TaxonomyPath("knowledge", "general"), item_id="a"),
        JudgeVerdict(analysis="", correctness=False, score=2,
                     taxonomy=TaxonomyPath("knowledge", "frameworks"), item_id="b"),
    ]
    failures = [TaxonomyPath("knowledge", "general")]
    report = aggregate_openqa(verdicts, failures)
    assert report.mean_correctness["knowledge"] == pytest.approx(100 / 3)
    assert report.judge_failures == 1
    stats = report.score_stats["knowledge"]
    assert stats["count"] == 2  # failures excluded from score stats
    assert stats["mean"] == pytest.approx(5.5)


# -- report emission -------------------------------------------------------------------


def test_json_emit_parse_reemit_identical(tmp_path):
    report = EvalReport.from_leaf_accuracy(INS_LEAVES, model="m")
    p1, p2 = tmp_path / "r1.json", tmp_path / "r2.json"
    emit_report(report, "json", p1)
    emit_report(load_report(p1), "json", p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_markdown_six_numeric_columns(tmp_path):
    report = EvalReport.from_leaf_accuracy(INS_LEAVES, model="m")
    path = emit_report(report, "markdown", tmp_path / "r.md")
    lines = path.read_text().splitlines()
    assert lines[0] == "| Model | Macro | Gen | Frm | Off | CLI | Kali |"
    cells = [c.strip() for c in lines[2].split("|")[2:-1]]
    assert cells == ["85.73", "84.20", "84.98", "89.06", "86.80", "80.30"]


def test_csv_rows(tmp_path):
    report = EvalReport.from_leaf_accuracy(INS_LEAVES, model="m")
    path = emit_report(report, "csv", tmp_path / "r.csv")
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "model,metric,value"
    assert "m,macro,85.73" in lines
    assert "m,leaf:Kali,80.30" in lines


def test_empty_report_valid(tmp_path):
    report = EvalReport()
    for fmt in ("json", "csv", "markdown"):
        path = emit_report(report, fmt, tmp_path / f"empty.{fmt}")
        assert path.exists()
    assert json.loads((tmp_path / "empty.json").read_text())["macro_accuracy"] == 0.0
