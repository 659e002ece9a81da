from __future__ import annotations

import json
import string
from pathlib import Path

import httpx
import pytest

from biorlvr.judge import (
    PREFERENCE_TEMPLATE,
    JudgeClient,
    JudgeConfig,
    JudgeError,
    RatingParseError,
    build_consistency_prompt,
    build_preference_prompt,
    consistency_rate,
    judge_consistency,
    judge_preference,
    messages_to_chatml,
    order_schedule,
    parse_rating,
    render_preference,
)
from biorlvr.qa.items import make_item

FIXTURE = Path(__file__).parent / "fixtures" / "preference_prompt.txt"


@pytest.fixture(scope="module")
def item():
    return make_item(
        item_id="j-1",
        family="TOY",
        question_type="t",
        question="Which gene is more highly expressed in tumour tissue?",
        correct="GENE1",
        others=["GENE2"],
        subjects={"x": ["e"]},
        metadata={},
    )


def mock_client(reply, cfg, log=None):
    """reply(messages) -> judge text; every request body is appended to log."""

    def handler(request: httpx.Request) -> httpx.Response:
        body = json.loads(request.content)
        if log is not None:
            log.append((request, body))
        out = reply(body["messages"])
        if isinstance(out, int):
            return httpx.Response(out)
        return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": out}}]})

    return JudgeClient(cfg, transport=httpx.MockTransport(handler))


def slot1(messages):
    user = messages[1]["content"]
    return user.split("<Response 1>\n", 1)[1].split("\n</Response 1>", 1)[0]


CFG = JudgeConfig(endpoint="http://judge.test/v1", repeats=5, backoff=0)


# -- prompt -------------------------------------------------------------------


def test_template_matches_fixture_outside_slots():
    fixture = FIXTURE.read_text(encoding="utf-8")
    assert PREFERENCE_TEMPLATE == fixture
    rendered = render_preference("Q?", "first", "second")
    assert rendered == fixture.format(question="Q?", response1="first", response2="second")
    assert "You MUST respond by first justifying your rating" in rendered
    assert '{"rating": <rating>}' in rendered


def test_slot_substitution_preserves_bytes():
    slots = {"question": "Q {x} \\", "response1": "R1\n\nline", "response2": "{}"}
    rendered = render_preference(**slots)
    # literal segments of the template, interleaved with the slot values
    pieces = []
    for literal, name, _, _ in string.Formatter().parse(FIXTURE.read_text(encoding="utf-8")):
        pieces.append(literal)
        if name is not None:
            pieces.append(slots[name])
    assert rendered == "".join(pieces)
    msgs = build_preference_prompt(**slots)
    assert [m["role"] for m in msgs] == ["system", "user"]
    assert messages_to_chatml(msgs) == rendered


def test_swapped_responses_change_only_response_blocks():
    a = build_preference_prompt("Q", "alpha", "beta")
    b = build_preference_prompt("Q", "beta", "alpha")
    assert a[0] == b[0]
    assert a[1]["content"].replace("alpha", "@").replace("beta", "alpha").replace("@", "beta") == b[1]["content"]


def test_empty_response_rejected():
    with pytest.raises(ValueError):
        render_preference("Q", " ", "x")


# -- parsing ------------------------------------------------------------------


def test_parse_rating():
    assert parse_rating('Response 1 is sharper.\n<json>{"rating": 1}</json>') == 1
    assert parse_rating('<json>{"rating": -1}</json>') == -1
    assert parse_rating('<json>\n{"rating": 1}\n</json> and <json>{"rating": -1}</json>') == 1
    for bad in ('<json>{"rating": 0}</json>', '<json>{"rating": 2}</json>', "no block", "<json>{rating}</json>",
                '<json>{"rating": true}</json>', '<json>{"rating": 1.0}</json>', '<json>{"score": 1}</json>'):
        with pytest.raises(RatingParseError):
            parse_rating(bad)


# -- preference ---------------------------------------------------------------


def test_schedule_balance():
    for n in range(1, 12):
        s = order_schedule(n)
        assert s.count("AB") in (n // 2, (n + 1) // 2)


def test_position_bias_cancels_with_even_repeats(item):
    cfg = JudgeConfig(endpoint="http://judge.test/v1", repeats=6, backoff=0)
    with mock_client(lambda m: '<json>{"rating": 1}</json>', cfg) as c:
        res = judge_preference(item, "resp A", "resp B", cfg, c)
    assert res.mean == 0 and res.preferred == "tie"
    assert res.ratings == [1, -1, 1, -1, 1, -1]
    # five repeats cannot cancel exactly: three slot-1 wins for A, two for B
    with mock_client(lambda m: '<json>{"rating": 1}</json>', CFG) as c:
        assert judge_preference(item, "resp A", "resp B", CFG, c).mean == pytest.approx(0.2)


def test_five_repeat_mean(item):
    # canonical ratings [+1,+1,+1,-1,+1]: A wins except on the fourth repeat
    calls = {"n": 0}
    cfg = JudgeConfig(endpoint="http://judge.test/v1", repeats=5, backoff=0, max_parallel=1)

    def reply(messages):
        k = calls["n"]
        calls["n"] += 1
        a_first = slot1(messages) == "resp A"
        a_wins = k != 3
        return f'<json>{{"rating": {1 if a_wins == a_first else -1}}}</json>'

    with mock_client(reply, cfg) as c:
        res = judge_preference(item, "resp A", "resp B", cfg, c)
    assert res.ratings == [1, 1, 1, -1, 1]
    assert res.mean == pytest.approx(0.6) and res.preferred == "A"
    assert res.schedule == ["AB", "BA", "AB", "BA", "AB"]


def test_content_judge_is_deterministic(item):
    def reply(messages):
        return '<json>{"rating": %d}</json>' % (1 if "careful" in slot1(messages) else -1)

    out = []
    for _ in range(2):
        with mock_client(reply, CFG) as c:
            out.append(json.dumps(judge_preference(item, "careful answer", "sloppy", CFG, c).to_dict(), sort_keys=True))
    assert out[0] == out[1]
    assert json.loads(out[0])["mean"] == 1.0


def test_retry_then_missing(item):
    seen = []
    cfg = JudgeConfig(endpoint="http://judge.test/v1", repeats=2, backoff=0, max_parallel=1)
    replies = iter(['<json>{"rating": 0}</json>', '<json>{"rating": 1}</json>', "garbage", "still garbage"])
    with mock_client(lambda m: next(replies), cfg, seen) as c:
        res = judge_preference(item, "a", "b", cfg, c)
    assert len(seen) == 4
    assert res.ratings == [1, None] and res.mean == 1.0
    assert len(res.errors) == 1 and "repeat 1" in res.errors[0]


def test_all_failed_is_item_error(item):
    with mock_client(lambda m: 500, CFG) as c:
        with pytest.raises(JudgeError):
            judge_preference(item, "a", "b", CFG, c)


def test_request_shape(item, monkeypatch):
    monkeypatch.setenv("JUDGE_API_KEY", "secret")
    seen = []
    cfg = JudgeConfig(endpoint="http://judge.test/v1", model="m1", temperature=0.3, repeats=1, backoff=0)
    with mock_client(lambda m: '<json>{"rating": 1}</json>', cfg, seen) as c:
        judge_preference(item, "a", "b", cfg, c)
    req, body = seen[0]
    assert str(req.url) == "http://judge.test/v1/chat/completions"
    assert req.headers["authorization"] == "Bearer secret"
    assert body["model"] == "m1" and body["temperature"] == 0.3
    assert "GENE1" in body["messages"][1]["content"]


# -- consistency ----------------------------------------------------------------


def test_consistency_quoted_case(item):
    seen = []
    reasoning = "Looking at the data, the answer would be B."
    with mock_client(lambda m: "<answer>B</answer>", CFG, seen) as c:
        res = judge_consistency(item, reasoning, "A", CFG, c)
    assert not res.consistent and res.predicted == "B"
    for _, body in seen:
        text = json.dumps(body)
        assert "<answer>" not in body["messages"][1]["content"]
        assert "final answer" not in text.lower()


def test_consistency_matching_case(item):
    with mock_client(lambda m: "A", CFG) as c:
        res = judge_consistency(item, "GENE1 is clearly higher.", "A", CFG, c)
    assert res.consistent


def test_consistency_prompt_rejects_answer_block(item):
    with pytest.raises(ValueError):
        build_consistency_prompt(item, "x <answer>A</answer>")
    with pytest.raises(ValueError):
        build_consistency_prompt(item, "   ")


def test_consistency_unparseable(item):
    with mock_client(lambda m: "maybe", CFG) as c:
        with pytest.raises(JudgeError):
            judge_consistency(item, "hmm", "A", CFG, c)


def test_consistency_rate_recount(item):
    replies = ["A", "B", "A", "A"]
    results = []
    for i, r in enumerate(replies):
        with mock_client(lambda m, r=r: r, CFG) as c:
            results.append(judge_consistency(item, f"trace {i}", "A", CFG, c))
    flags = [r.to_dict()["consistent"] for r in results]
    assert consistency_rate(results) == sum(1 for f in flags if f) / len(flags) == 0.75


def test_config_validation():
    with pytest.raises(ValueError):
        JudgeConfig(repeats=0)
    with pytest.raises(ValueError):
        JudgeConfig(max_parallel=0)
