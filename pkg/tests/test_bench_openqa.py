"""Open-QA plan/generate/verify pipeline tests, including dual-verifier
consensus."""

from pathlib import Path

import pytest

from cyberforge.bench.openqa import (
    CHECKLIST_SIZE,
    EvaluationPlanItem,
    OpenQaItem,
    generate_openqa,
    parse_openqa_reply,
    parse_verifier_reply,
    plan_openqa,
    verify_openqa,
)
from cyberforge.gateway import Gateway, MockBackend
from cyberforge.parsing import ReplyParseError
from cyberforge.tokenizers import WhitespaceTokenizer

FIXTURES = Path(__file__).parent / "fixtures"


def fixture(name):
    return (FIXTURES / name).read_text(encoding="utf-8")


def gateway_replying(text):
    return Gateway(MockBackend(reply_fn=lambda req: text))


def make_plan_item(**kwargs):
    defaults = dict(
        evaluation_name="Procedure Synthesis",
        purpose="p",
        instruction_template="Explain how to use btscanner.",
        answer_guideline="g",
        context_excerpt="",
    )
    defaults.update(kwargs)
    return EvaluationPlanItem(**defaults)


# -- planning -----------------------------------------------------------------


def test_plan_fixture_two_shapes():
    items, dropped = plan_openqa("seed", gateway_replying(fixture("openqa_planner_reply.txt")))
    assert dropped == []
    assert len(items) == 2
    with_context, without_context = items
    assert with_context.needs_context()
    assert with_context.context_excerpt.startswith("btscanner --help")
    assert not without_context.needs_context()
    assert without_context.context_excerpt == ""


def test_plan_empty_list_legal():
    items, dropped = plan_openqa("seed", gateway_replying('{"evaluation_plan": []}'))
    assert items == [] and dropped == []


def test_plan_placeholder_without_excerpt_dropped():
    reply = (
        '{"evaluation_plan": [{"evaluation_name": "X", "purpose": "p",'
        ' "instruction_template": "Use\\n```\\n<CONTEXT>\\n```", "answer_guideline": "g",'
        ' "context_excerpt": ""}]}'
    )
    items, dropped = plan_openqa("seed", gateway_replying(reply))
    assert items == []
    assert dropped[0].reason == "placeholder without excerpt"


def test_plan_excerpt_without_placeholder_dropped():
    reply = (
        '{"evaluation_plan": [{"evaluation_name": "X", "purpose": "p",'
        ' "instruction_template": "Self-contained question.", "answer_guideline": "g",'
        ' "context_excerpt": "stray excerpt"}]}'
    )
    _, dropped = plan_openqa("seed", gateway_replying(reply))
    assert dropped[0].reason == "excerpt without placeholder"


def test_plan_excerpt_too_long_dropped():
    long_excerpt = "tok " * 2100
    reply = (
        '{"evaluation_plan": [{"evaluation_name": "X", "purpose": "p",'
        f' "instruction_template": "```\\n<CONTEXT>\\n```", "answer_guideline": "g",'
        f' "context_excerpt": "{long_excerpt}"}}]}}'
    )
    _, dropped = plan_openqa("seed", gateway_replying(reply), tokenizer=WhitespaceTokenizer())
    assert dropped[0].reason == "excerpt too long"


def test_plan_name_over_five_words_dropped():
    reply = (
        '{"evaluation_plan": [{"evaluation_name": "one two three four five six",'
        ' "purpose": "p", "instruction_template": "q", "answer_guideline": "g",'
        ' "context_excerpt": ""}]}'
    )
    _, dropped = plan_openqa("seed", gateway_replying(reply))
    assert dropped[0].reason == "evaluation name exceeds 5 words"


# -- generation ----------------------------------------------------------------


def test_generator_fixture_layout():
    item = generate_openqa(
        make_plan_item(), "seed", gateway_replying(fixture("openqa_generator_reply.txt"))
    )
    assert item is not None
    assert item.evaluation_name == "Procedure Synthesis"
    assert item.question == (
        "Explain how to use btscanner to extract information from a Bluetooth device without pairing."
    )
    assert item.reference_answer.startswith("btscanner is a tool designed")
    assert item.reference_answer.endswith("without pairing.")


def test_generator_insufficient_information_marker():
    reply = (
        "### Sufficient Information for Grounded OpenQA: False\n"
        "The seed data lacks any procedure detail."
    )
    item = generate_openqa(make_plan_item(), "seed", gateway_replying(reply))
    assert item is None


def test_generator_unsubstituted_placeholder_is_error():
    reply = (
        "### Sufficient Information for Grounded OpenQA:\nTrue\n\n"
        "### Final OpenQA:\n\n#### Question:\nExplain\n```\n<CONTEXT>\n```\n\n"
        "#### Reference Answer:\nanswer\n"
    )
    with pytest.raises(ReplyParseError, match="placeholder"):
        parse_openqa_reply(reply)


def test_generator_missing_sections_is_error():
    reply = "### Sufficient Information for Grounded OpenQA:\nTrue\n\n#### Question:\nQ only\n"
    with pytest.raises(ReplyParseError, match="Reference Answer") as exc_info:
        parse_openqa_reply(reply)
    assert exc_info.value.raw_reply == reply


def test_generator_missing_flag_is_error():
    with pytest.raises(ReplyParseError, match="sufficiency"):
        parse_openqa_reply("#### Question:\nq\n#### Reference Answer:\na\n")


# -- verification ----------------------------------------------------------------


def make_qa_item():
    return OpenQaItem(
        evaluation_name="Procedure Synthesis",
        question="Explain how to use btscanner without pairing.",
        reference_answer="Install it, run it, probe devices.",
    )


def replace_line(text, old, new):
    assert old in text
    return text.replace(old, new)


def test_verifier_reply_parses_twelve_checks():
    record = parse_verifier_reply(fixture("openqa_verifier_reply.txt"))
    assert record.verdict == "PASS"
    assert record.score == 9
    assert len(record.checklist) == CHECKLIST_SIZE
    assert all(record.checklist.values())
    assert record.issues == []
    assert record.parse_failure == ""


def test_verifier_eleven_checks_incomplete():
    text = fixture("openqa_verifier_reply.txt")
    # drop checkpoint 11 entirely
    start = text.index("11. No Answer Overleakage:")
    end = text.index("12. Factually Correct")
    record = parse_verifier_reply(text[:start] + text[end:])
    assert record.verdict == "FAIL"
    assert "checklist incomplete: 11/12" in record.parse_failure


def test_verifier_fail_with_issues():
    text = fixture("openqa_verifier_reply.txt")
    text = replace_line(text, "Verdict:\nPASS", "Verdict:\nFAIL")
    text = replace_line(
        text, "Issues:\nNone.", "Issues:\n- The question leaks the answer.\n- Too broad."
    )
    record = parse_verifier_reply(text)
    assert record.verdict == "FAIL"
    assert record.issues == ["The question leaks the answer.", "Too broad."]


def test_consensus_pass_min_score():
    reply_a = fixture("openqa_verifier_reply.txt")  # PASS 9
    reply_b = replace_line(reply_a, "OpenQA Quality Score: 9", "OpenQA Quality Score: 8")
    gw_a, gw_b = gateway_replying(reply_a), gateway_replying(reply_b)
    item = make_qa_item()
    consensus = verify_openqa(item, "seed", (gw_a, gw_b))
    assert consensus.passed is True
    assert consensus.score == 8
    assert item.quality_score == 8
    assert [r.verdict for r in item.verifier_records] == ["PASS", "PASS"]


def test_consensus_pass_and_fail_is_fail():
    reply_a = fixture("openqa_verifier_reply.txt")
    reply_b = replace_line(reply_a, "Verdict:\nPASS", "Verdict:\nFAIL")
    consensus = verify_openqa(make_qa_item(), "seed", (gateway_replying(reply_a),
                                                       gateway_replying(reply_b)))
    assert consensus.passed is False


def test_consensus_unparseable_counts_as_fail():
    reply_a = fixture("openqa_verifier_reply.txt")
    consensus = verify_openqa(make_qa_item(), "seed",
                              (gateway_replying(reply_a), gateway_replying("garbage")))
    assert consensus.passed is False
    assert consensus.records[1].parse_failure != ""


def test_verify_requires_exactly_two_backends():
    with pytest.raises(ValueError):
        verify_openqa(make_qa_item(), "seed", (gateway_replying("x"),))  # type: ignore[arg-type]


def test_item_json_roundtrip():
    from cyberforge.documents import TaxonomyPath

    item = make_qa_item()
    item.taxonomy = TaxonomyPath("skill", "offensive")
    item.verifier_records = [parse_verifier_reply(fixture("openqa_verifier_reply.txt"))] * 2
    item.human_status = "accepted"
    restored = OpenQaItem.from_json(item.to_json())
    assert restored.question == item.question
    assert restored.consensus_passed
    assert restored.human_status == "accepted"
    assert restored.taxonomy == item.taxonomy
