from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from biorlvr.qa.items import make_item
from biorlvr.rewards import (
    TAGS,
    parse_completion,
    reward_correct,
    reward_format,
    reward_tag_count,
    reward_valid_choice,
    score_completions,
    total_reward,
)

PERFECT = "<think>t</think>\n<answer>A</answer>"


@pytest.fixture(scope="module")
def item():
    return make_item(
        item_id="r-1",
        family="TOY",
        question_type="t",
        question="Which?",
        correct="alpha",
        others=["beta"],
        subjects={"x": ["e"]},
        metadata={},
    )


def test_parse_well_formed():
    p = parse_completion(PERFECT)
    assert p.counts == (1, 1, 1, 1)
    assert p.answer_body == "A" and p.think_body == "t"


def test_parse_counts_and_empty():
    assert parse_completion("<answer>A</answer><answer>B</answer>").answer_open == 2
    p = parse_completion("just text")
    assert p.counts == (0, 0, 0, 0) and p.answer_body is None and p.think_body is None
    assert parse_completion("<answer>A").answer_body is None


def test_format_reward():
    assert reward_format(parse_completion(PERFECT)) == 1
    assert reward_format(parse_completion("<answer>A</answer>")) == 0
    assert reward_format(parse_completion("<think><think>x</think></think><answer>A</answer>")) == 0
    assert reward_format(parse_completion("<think>x<answer>A</answer>")) == 0
    # answer before think, and stray text outside the blocks
    assert reward_format(parse_completion("<answer>A</answer><think>t</think>")) == 0
    assert reward_format(parse_completion("hi <think>t</think><answer>A</answer>")) == 0
    assert reward_format(parse_completion("  <think>t</think>\n\n<answer>A</answer>\n")) == 1


def test_tag_count():
    assert reward_tag_count(parse_completion(PERFECT)) == 1.0
    assert reward_tag_count(parse_completion("<think>t</think><answer>A")) == 0.75
    assert reward_tag_count(parse_completion("<think><think>t</think><answer>A</answer>")) == 0.75


def test_valid_and_correct():
    assert reward_valid_choice("A", ["A", "B"]) == 1
    assert reward_valid_choice("C", ["A", "B"]) == 0
    assert reward_valid_choice(" A ", ["A", "B"]) == 1
    assert reward_valid_choice(None, ["A", "B"]) == 0
    assert reward_correct("B", "B") == 1
    assert reward_correct("A", "B") == 0
    assert reward_correct("b", "B") == 0
    assert reward_correct(None, "B") == 0


def test_option_text_fallback(item):
    text = f"<think>t</think><answer>{item.correct_text}</answer>"
    assert total_reward(text, item).correct == 0
    rv = total_reward(text, item, match_option_text=True)
    assert rv.correct == 1 and rv.valid_choice == 1


def test_total_examples(item):
    key = item.answer
    rv = total_reward(f"<think>t</think>\n<answer>{key}</answer>", item)
    assert rv.total == 4.0
    rv = total_reward(f"<answer>{key}</answer>", item)
    assert (rv.format, rv.tag_count, rv.valid_choice, rv.correct, rv.total) == (0, 0.5, 1, 1, 2.5)
    assert total_reward("", item).total == 0.0


def test_byte_deterministic(item):
    a = total_reward(PERFECT, item).to_json()
    b = total_reward(PERFECT, item).to_json()
    assert a == b
    assert json.loads(a)["total"] == 4.0


def test_score_completions(item):
    rows = score_completions([{"item_id": "r-1", "text": PERFECT}], {"r-1": item})
    assert rows == [{"item_id": "r-1", "format": 1.0, "tag_count": 1.0, "valid_choice": 1.0, "correct": 1.0, "total": 4.0}]
    with pytest.raises(KeyError):
        score_completions([{"item_id": "nope", "text": ""}], {"r-1": item})


_pieces = st.lists(st.sampled_from([*TAGS, "A", "B", " ", "\n", "x", "<", ">", "/"]), max_size=20).map("".join)


@settings(max_examples=300, deadline=None)
@given(st.one_of(_pieces, st.text(max_size=60)))
def test_reward_invariants(item, text):
    rv = total_reward(text, item)
    assert rv.total == rv.format + rv.tag_count + rv.valid_choice + rv.correct
    assert 0 <= rv.total <= 4
    assert rv.correct <= rv.valid_choice
    assert rv.tag_count in (0, 0.25, 0.5, 0.75, 1.0)
    if rv.format:
        assert rv.tag_count == 1.0
    assert total_reward(text, item).to_json() == rv.to_json()
