"""Planner/augmenter parsing, conversation-block format fidelity,
validation, and SFT export tests."""

import json
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cyberforge.augment import (
    AugmentationPlan,
    BlockFormatError,
    Conversation,
    DEFAULT_SYSTEM_PROMPT,
    Turn,
    ValidationConfig,
    augment,
    augment_seed_chunk,
    export_sft,
    import_sft,
    parse_conversation_block,
    plan,
    serialize_conversation,
    split_blocks,
    validate_conversation,
)
from cyberforge.gateway import Gateway, MockBackend
from cyberforge.parsing import ReplyParseError, extract_json

FIXTURES = Path(__file__).parent / "fixtures"


def fixture(name):
    return (FIXTURES / name).read_text(encoding="utf-8")


def gateway_replying(text):
    return Gateway(MockBackend(reply_fn=lambda req: text))


# -- planner -------------------------------------------------------------------


def test_planner_fixture_parses_four_skill_sets():
    plan_ = plan("seed", gateway_replying(fixture("planner_reply.txt")))
    assert len(plan_.skill_sets) == 4
    first = plan_.skill_sets[0]
    assert first.name == "Network Discovery"
    assert len(first.augmentation_types) == 2
    assert first.augmentation_types[0].type == "ARP Scan Simulation"
    assert plan_.skill_sets[-1].name == "Configuration and Troubleshooting"


def test_empty_skill_sets_is_legal():
    plan_ = plan("seed", gateway_replying('{"skill_sets": []}'))
    assert plan_.skill_sets == []


def test_trailing_prose_after_fenced_json_still_extracts():
    reply = (
        "Here is my plan:\n```json\n"
        '{"skill_sets": [{"name": "X", "augmentation_types": '
        '[{"type": "t", "description": "d"}]}]}\n'
        "```\nHope this helps! Let me know if you need more."
    )
    plan_ = plan("seed", gateway_replying(reply))
    assert [s.name for s in plan_.skill_sets] == ["X"]


def test_unparseable_reply_raises_with_raw():
    with pytest.raises(ReplyParseError) as exc_info:
        plan("seed", gateway_replying("no json here at all"))
    assert "no json here" in exc_info.value.raw_reply


def test_schema_violation_is_an_error():
    with pytest.raises(ReplyParseError):
        plan("seed", gateway_replying('{"skill_sets": [{"name": "X", "augmentation_types": []}]}'))


def test_last_fenced_json_wins():
    reply = (
        "```json\n{\"skill_sets\": \"not a list\"}\n```\n"
        "Corrected:\n"
        "```json\n{\"skill_sets\": [{\"name\": \"Y\", \"augmentation_types\": "
        "[{\"type\": \"t\", \"description\": \"d\"}]}]}\n```\n"
    )
    obj = extract_json(reply)
    assert obj["skill_sets"][0]["name"] == "Y"


# -- block splitting -------------------------------------------------------------


def test_augmenter_fixture_splits_into_two_blocks():
    blocks = split_blocks(fixture("augmenter_reply.txt"))
    assert len(blocks) == 2
    assert blocks[0].count("<|start|>") == 1
    assert blocks[1].count("<|start|>") == 1


def test_reply_without_delimiter_single_block():
    reply = "<|start|>\n<|user|>: q\n<|assistant|>: a\n<|end|>"
    assert split_blocks(reply) == [reply]


def test_empty_segments_around_delimiters_dropped():
    reply = "---\n\n---\n<|start|>\n<|user|>: q\n<|assistant|>: a\n<|end|>\n---\n   \n---\n"
    blocks = split_blocks(reply)
    assert len(blocks) == 1


def test_augment_one_call_per_skill_set():
    calls = []

    def reply_fn(req):
        calls.append(req.messages[-1].content)
        return "---\n<|start|>\n<|user|>: q\n<|assistant|>: a\n<|end|>\n---"

    plan_ = AugmentationPlan.from_json(
        {"skill_sets": [
            {"name": "S1", "augmentation_types": [{"type": "t1", "description": "d"}]},
            {"name": "S2", "augmentation_types": [{"type": "t2", "description": "d"}]},
        ]}
    )
    results = augment("seed text", plan_, Gateway(MockBackend(reply_fn=reply_fn)))
    assert len(calls) == 2
    assert "S1" in calls[0] and "S2" in calls[1]
    assert all(len(blocks) == 1 for _, blocks in results)


def test_augment_empty_plan_rejected():
    with pytest.raises(ValueError):
        augment("seed", AugmentationPlan([]), gateway_replying("x"))


# -- block parsing ----------------------------------------------------------------


def test_parse_three_pair_fixture_block():
    block = split_blocks(fixture("augmenter_reply.txt"))[0]
    conv = parse_conversation_block(block)
    assert conv.title == "Network Discovery with ARP Scan Simulation"
    assert conv.system == (
        "You are a cybersecurity expert specializing in network discovery and penetration testing."
    )
    roles = [t.role for t in conv.turns]
    assert roles == ["user", "assistant"] * 3
    assert conv.turns[0].content.startswith("I'm trying to understand how to use ARP scan")
    # multi-paragraph assistant content with an embedded code fence survives
    assert "```bash\narp-scan -l\n```" in conv.turns[1].content
    assert conv.turns[-1].content.endswith("network discovery efforts?")


def test_parse_one_pair_fixture_block():
    block = split_blocks(fixture("augmenter_reply.txt"))[1]
    conv = parse_conversation_block(block)
    assert conv.title == "Advanced ARP Scan Techniques"
    assert [t.role for t in conv.turns] == ["user", "assistant"]


def test_truncated_block_is_format_error():
    block = "<|start|>\n<|title|>: T\n<|user|>: q\n<|assistant|>: a"
    with pytest.raises(BlockFormatError, match="<|end|>"):
        parse_conversation_block(block)


def test_missing_start_is_format_error():
    with pytest.raises(BlockFormatError, match="<|start|>"):
        parse_conversation_block("<|user|>: q\n<|assistant|>: a\n<|end|>")


def test_default_system_prompt_when_absent():
    conv = parse_conversation_block("<|start|>\n<|user|>: q\n<|assistant|>: a\n<|end|>")
    assert conv.system == DEFAULT_SYSTEM_PROMPT
    assert conv.title == ""


def test_alternation_violation_reports_line():
    block = "<|start|>\n<|user|>: q\n<|user|>: again\n<|assistant|>: a\n<|end|>"
    with pytest.raises(BlockFormatError, match="line 3"):
        parse_conversation_block(block)


def test_assistant_first_is_format_error():
    block = "<|start|>\n<|assistant|>: hi\n<|user|>: q\n<|end|>"
    with pytest.raises(BlockFormatError, match="expected <|user|>"):
        parse_conversation_block(block)


def test_dangling_user_turn_is_format_error():
    block = "<|start|>\n<|user|>: q\n<|assistant|>: a\n<|user|>: dangling\n<|end|>"
    with pytest.raises(BlockFormatError, match="assistant"):
        parse_conversation_block(block)


# -- round trips ---------------------------------------------------------------------


def normalize(text: str) -> str:
    return "\n".join(line.rstrip() for line in text.strip().splitlines())


def test_serialize_parse_roundtrip_fixture_blocks():
    for block in split_blocks(fixture("augmenter_reply.txt")):
        conv = parse_conversation_block(block)
        assert normalize(serialize_conversation(conv)) == normalize(block)


@st.composite
def random_conversation(draw):
    words = st.sampled_from("scan port exploit tool network packet shell".split())
    content = st.lists(words, min_size=1, max_size=12).map(" ".join)
    n_pairs = draw(st.integers(1, 4))
    turns = []
    for _ in range(n_pairs):
        turns.append(Turn("user", draw(content)))
        multi = draw(st.booleans())
        body = draw(content)
        if multi:
            body += "\n\n```bash\n" + draw(content) + "\n```\nmore " + draw(content)
        turns.append(Turn("assistant", body))
    return Conversation(title=draw(content), system=draw(content), turns=turns)


@settings(max_examples=60, deadline=None)
@given(conv=random_conversation())
def test_parse_serialize_roundtrip_random(conv):
    block = serialize_conversation(conv)
    parsed = parse_conversation_block(block)
    assert parsed.title == conv.title
    assert parsed.system == conv.system
    assert parsed.turns == conv.turns
    assert serialize_conversation(parsed) == block


# -- validation ---------------------------------------------------------------------


SEED = "Use arp-scan to discover hosts on the local network and read MAC vendors."


def conv_quoting_seed():
    return Conversation(
        title="Host discovery",
        system=DEFAULT_SYSTEM_PROMPT,
        turns=[
            Turn("user", "How do I discover hosts with arp-scan on the local network?"),
            Turn("assistant", "Run arp-scan to list hosts and MAC vendors on the network."),
            Turn("user", "What do the MAC vendors tell me?"),
            Turn("assistant", "Vendors identify device manufacturers discovered by the scan."),
            Turn("user", "Any flags I should know?"),
            Turn("assistant", "Use --localnet to scan the local network directly."),
        ],
    )


def test_wellformed_conversation_passes():
    verdict = validate_conversation(conv_quoting_seed(), SEED)
    assert verdict.passed and verdict.failures == []


def test_two_consecutive_assistant_turns_format_failure():
    conv = conv_quoting_seed()
    conv.turns[2] = Turn("assistant", "extra assistant turn about arp-scan hosts")
    verdict = validate_conversation(conv, SEED)
    assert not verdict.passed
    assert any(f["check"] == "format" for f in verdict.failures)


def test_zero_overlap_relevance_failure():
    conv = Conversation(
        title="Baking",
        system=DEFAULT_SYSTEM_PROMPT,
        turns=[Turn("user", "Best flour for sourdough bread?"),
               Turn("assistant", "Strong white flour works nicely.")],
    )
    verdict = validate_conversation(conv, SEED)
    assert not verdict.passed
    assert [f["check"] for f in verdict.failures] == ["relevance"]


def test_turn_token_bound_consistency_failure():
    conv = conv_quoting_seed()
    conv.turns[1] = Turn("assistant", "arp-scan network hosts " * 3000)
    verdict = validate_conversation(conv, SEED, ValidationConfig(max_turn_tokens=8192))
    assert any(f["check"] == "consistency" for f in verdict.failures)


# -- export -------------------------------------------------------------------------


def test_export_one_pair_three_elements(tmp_path):
    conv = Conversation(
        title="t", system="sys prompt",
        turns=[Turn("user", "q"), Turn("assistant", "a")],
    )
    path = tmp_path / "sft.jsonl"
    assert export_sft([conv], path) == 1
    record = json.loads(path.read_text().strip())
    assert record == {
        "conversations": [
            {"from": "system", "value": "sys prompt"},
            {"from": "human", "value": "q"},
            {"from": "gpt", "value": "a"},
        ]
    }


def test_export_empty_input_empty_file(tmp_path):
    path = tmp_path / "sft.jsonl"
    assert export_sft([], path) == 0
    assert path.read_text() == ""


def test_export_import_export_byte_identical(tmp_path):
    convs = [
        Conversation(title="a", system="s1",
                     turns=[Turn("user", "q1"), Turn("assistant", "a1")]),
        Conversation(title="b", system="s2",
                     turns=[Turn("user", "q2"), Turn("assistant", "a2"),
                            Turn("user", "q3"), Turn("assistant", "a3")]),
    ]
    p1, p2 = tmp_path / "one.jsonl", tmp_path / "two.jsonl"
    export_sft(convs, p1)
    imported = import_sft(p1)
    assert [(c.system, c.turns) for c in imported] == [(c.system, c.turns) for c in convs]
    export_sft(imported, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_export_rejects_malformed_conversation(tmp_path):
    conv = Conversation(title="bad", system="s",
                        turns=[Turn("assistant", "a"), Turn("user", "q")])
    with pytest.raises(ValueError, match="not valid for export"):
        export_sft([conv], tmp_path / "x.jsonl")


# -- end-to-end over one seed ----------------------------------------------------------


def test_augment_seed_chunk_provenance_and_rejects():
    plan_json = json.dumps({
        "skill_sets": [
            {"name": "Discovery", "augmentation_types": [{"type": "Walkthrough",
                                                          "description": "d"}]},
        ]
    })
    good_block = (
        "---\n<|start|>\n<|title|>: Scanning hosts\n"
        "<|user|>: How do I use arp-scan on the local network?\n"
        "<|assistant|>: Run arp-scan to discover hosts and MAC vendors.\n<|end|>\n---\n"
        "<|start|>\n<|user|>: broken block with no assistant\n<|end|>\n---"
    )

    def reply_fn(req):
        return plan_json if "skill_sets" in req.messages[0].content else good_block

    convs, rejected = augment_seed_chunk("seed-1", SEED, Gateway(MockBackend(reply_fn=reply_fn)))
    assert len(convs) == 1
    assert convs[0].provenance["seed_id"] == "seed-1"
    assert convs[0].provenance["skill_set"] == "Discovery"
    assert convs[0].provenance["augmentation_type"] == "Walkthrough"
    assert len(rejected) == 1
    assert rejected[0].reason.startswith("format")


def test_augment_gateway_error_carries_skill_provenance():
    from cyberforge.augment import AugmentationError
    from cyberforge.gateway import TransportError

    plan_ = AugmentationPlan.from_json(
        {"skill_sets": [{"name": "Discovery",
                         "augmentation_types": [{"type": "t", "description": "d"}]}]}
    )
    backend = MockBackend(script=[TransportError("down")] * 3)
    from cyberforge.gateway import BackendProfile, RetryPolicy

    gw = Gateway(backend, BackendProfile(retry=RetryPolicy(max_attempts=3, backoff_base=0.0)),
                 sleep=lambda _: None)
    with pytest.raises(AugmentationError) as exc_info:
        augment("seed", plan_, gw)
    assert exc_info.value.skill_set == "Discovery"
    assert "Discovery" in str(exc_info.value)
