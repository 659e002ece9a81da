"""Completion parsing and the four verifiable rewards.

A completion is expected to look like ``<think>...</think><answer>X</answer>``.
Rewards are unit-weighted and summed, so ``total`` lies in [0, 4].
"""

from __future__ import annotations

import json
import re
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import asdict, dataclass
from typing import Any

from .qa.items import QAItem

THINK_OPEN, THINK_CLOSE = "<think>", "</think>"
ANSWER_OPEN, ANSWER_CLOSE = "<answer>", "</answer>"
TAGS = (THINK_OPEN, THINK_CLOSE, ANSWER_OPEN, ANSWER_CLOSE)

# whitespace is the only thing allowed outside the two blocks
_FORMAT_RE = re.compile(r"\s*<think>(.*?)</think>\s*<answer>(.*?)</answer>\s*", re.DOTALL)


@dataclass(frozen=True)
class CompletionParse:
    raw: str
    think_open: int
    think_close: int
    answer_open: int
    answer_close: int
    think_body: str | None
    answer_body: str | None

    @property
    def counts(self) -> tuple[int, int, int, int]:
        return (self.think_open, self.think_close, self.answer_open, self.answer_close)


@dataclass(frozen=True)
class RewardVector:
    format: float
    tag_count: float
    valid_choice: float
    correct: float
    total: float

    def to_dict(self) -> dict[str, float]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _first_block(text: str, open_tag: str, close_tag: str) -> str | None:
    i = text.find(open_tag)
    if i < 0:
        return None
    j = text.find(close_tag, i + len(open_tag))
    if j < 0:
        return None
    return text[i + len(open_tag) : j].strip()


def parse_completion(text: str) -> CompletionParse:
    """Count the four tag literals and pull out the first matched bodies."""
    return CompletionParse(
        raw=text,
        think_open=text.count(THINK_OPEN),
        think_close=text.count(THINK_CLOSE),
        answer_open=text.count(ANSWER_OPEN),
        answer_close=text.count(ANSWER_CLOSE),
        think_body=_first_block(text, THINK_OPEN, THINK_CLOSE),
        answer_body=_first_block(text, ANSWER_OPEN, ANSWER_CLOSE),
    )


def reward_format(parse: CompletionParse) -> float:
    """1 for exactly one think block followed by exactly one answer block."""
    if parse.counts != (1, 1, 1, 1):
        return 0.0
    return 1.0 if _FORMAT_RE.fullmatch(parse.raw) else 0.0


def reward_tag_count(parse: CompletionParse) -> float:
    return 0.25 * sum(c == 1 for c in parse.counts)


def _matches(body: str, target: str, text: str | None, use_text: bool) -> bool:
    if body == target:
        return True
    return use_text and text is not None and body == text.strip()


def reward_valid_choice(
    answer_body: str | None,
    options: Sequence[str],
    option_texts: Sequence[str] | None = None,
    match_option_text: bool = False,
) -> float:
    """1 iff the trimmed body equals an option label (case-sensitive)."""
    if answer_body is None:
        return 0.0
    body = answer_body.strip()
    texts = list(option_texts) if option_texts is not None else [None] * len(options)
    return 1.0 if any(_matches(body, lab, t, match_option_text) for lab, t in zip(options, texts)) else 0.0


def reward_correct(
    answer_body: str | None,
    key: str,
    key_text: str | None = None,
    match_option_text: bool = False,
) -> float:
    if answer_body is None:
        return 0.0
    return 1.0 if _matches(answer_body.strip(), key, key_text, match_option_text) else 0.0


def total_reward(text: str, item: QAItem, match_option_text: bool = False) -> RewardVector:
    p = parse_completion(text)
    fmt = reward_format(p)
    tags = reward_tag_count(p)
    texts = [o.text for o in item.options]
    valid = reward_valid_choice(p.answer_body, item.labels, texts, match_option_text)
    corr = reward_correct(p.answer_body, item.answer, item.correct_text, match_option_text)
    return RewardVector(fmt, tags, valid, corr, fmt + tags + valid + corr)


def score_completions(
    completions: Iterable[Mapping[str, Any]],
    items: Mapping[str, QAItem],
    match_option_text: bool = False,
) -> list[dict[str, Any]]:
    """Join ``{item_id, text}`` records with items and return reward rows."""
    rows = []
    for rec in completions:
        item = items.get(rec["item_id"])
        if item is None:
            raise KeyError(f"completion for unknown item {rec['item_id']!r}")
        rv = total_reward(rec["text"], item, match_option_text)
        rows.append({"item_id": rec["item_id"], **rv.to_dict()})
    return rows
