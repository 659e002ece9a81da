"""LLM-as-judge client: pairwise reasoning preference and answer consistency.

Talks to an OpenAI-compatible ``/chat/completions`` endpoint over httpx. Tests
inject an ``httpx.MockTransport`` so nothing leaves the process.
"""

from __future__ import annotations

import json
import logging
import os
import re
import time
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import httpx

from .qa.items import QAItem, render_prompt

log = logging.getLogger(__name__)

# ChatML-formatted preference template; .format() fills the three slots
PREFERENCE_TEMPLATE = """<|im_start|>system
You are evaluating two responses to a biology question. Your task is to assess which response demonstrates better biological reasoning.


Evaluate the responses based on these specific criteria:
1. Scientific accuracy
2. Logical coherence and depth of reasoning
3. Relevance and completeness of explanation
4. Clarity and precision of language


Then provide your final rating:
- If Response 1 is better: +1
- If Response 2 is better: -1


You MUST respond by first justifying your rating, then a JSON object in this exact format:
<json>
{{"rating": <rating>}}
</json>


Where <rating> is -1 or 1.
<|im_end|>


<|im_start|>user
Question: "{question}"


<Response 1>
{response1}
</Response 1>


<Response 2>
{response2}
</Response 2>
<|im_end|>


<|im_start|>assistant

"""

CONSISTENCY_TEMPLATE_VERSION = "1"
CONSISTENCY_SYSTEM = (
    "You will read a multiple-choice biology question and a reasoning trace written by another model. "
    "Using only the reasoning trace, decide which option the reasoning leads to. "
    "Reply with the option letter inside <answer></answer> tags and nothing else."
)
CONSISTENCY_USER = "Question:\n{question}\n\nReasoning:\n{reasoning}"

_CHATML_RE = re.compile(r"<\|im_start\|>(system|user)\n(.*?)\n<\|im_end\|>", re.DOTALL)
_JSON_RE = re.compile(r"<json>(.*?)</json>", re.DOTALL)
_LETTER_RE = re.compile(r"<answer>\s*([A-Za-z])\s*</answer>")


class JudgeError(RuntimeError):
    pass


class RatingParseError(JudgeError):
    pass


@dataclass
class JudgeConfig:
    endpoint: str = "http://localhost:8000/v1"
    model: str = "default"
    temperature: float = 0.6
    repeats: int = 5
    timeout: float = 60.0
    max_parallel: int = 4
    retries: int = 1
    backoff: float = 1.0
    api_key_env: str = "JUDGE_API_KEY"

    def __post_init__(self) -> None:
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.max_parallel < 1:
            raise ValueError("max_parallel must be >= 1")
        if self.retries < 0:
            raise ValueError("retries must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> JudgeConfig:
        return cls(**d)


@dataclass
class PreferenceResult:
    item_id: str
    ratings: list[int | None]  # canonical: +1 means response A preferred
    mean: float
    preferred: str
    schedule: list[str]
    errors: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ConsistencyResult:
    item_id: str
    predicted: str
    actual: str
    consistent: bool

    def to_dict(self) -> dict:
        return asdict(self)


# -- prompts -------------------------------------------------------------------


def render_preference(question: str, response1: str, response2: str) -> str:
    if not response1.strip() or not response2.strip():
        raise ValueError("both responses must be non-empty")
    return PREFERENCE_TEMPLATE.format(question=question, response1=response1, response2=response2)


def chatml_to_messages(text: str) -> list[dict[str, str]]:
    return [{"role": m.group(1), "content": m.group(2)} for m in _CHATML_RE.finditer(text)]


def messages_to_chatml(messages: Sequence[dict[str, str]]) -> str:
    """Inverse of chatml_to_messages for the preference layout."""
    blocks = [f"<|im_start|>{m['role']}\n{m['content']}\n<|im_end|>" for m in messages]
    return "\n\n\n".join([*blocks, "<|im_start|>assistant\n\n"])


def build_preference_prompt(question: str, response1: str, response2: str) -> list[dict[str, str]]:
    return chatml_to_messages(render_preference(question, response1, response2))


def build_consistency_prompt(item: QAItem, reasoning: str) -> list[dict[str, str]]:
    """Question, options and reasoning; the model's final answer is never included."""
    if not reasoning.strip():
        raise ValueError("reasoning must be non-empty")
    if "<answer>" in reasoning or "</answer>" in reasoning:
        raise ValueError("reasoning must not contain the answer block")
    user = CONSISTENCY_USER.format(question=render_prompt(item), reasoning=reasoning.strip())
    return [{"role": "system", "content": CONSISTENCY_SYSTEM}, {"role": "user", "content": user}]


# -- parsing -------------------------------------------------------------------


def parse_rating(text: str) -> int:
    m = _JSON_RE.search(text)
    if not m:
        raise RatingParseError("no <json> block")
    try:
        payload = json.loads(m.group(1))
    except json.JSONDecodeError as e:
        raise RatingParseError(f"malformed JSON: {e}") from None
    if not isinstance(payload, dict) or "rating" not in payload:
        raise RatingParseError("missing rating field")
    r = payload["rating"]
    if isinstance(r, bool) or not isinstance(r, int) or r not in (-1, 1):
        raise RatingParseError(f"rating out of domain: {r!r}")
    return r


def parse_letter(text: str, labels: Sequence[str]) -> str:
    m = _LETTER_RE.search(text)
    letter = m.group(1) if m else text.strip()
    if letter not in labels:
        raise JudgeError(f"unparseable judge letter: {text[:80]!r}")
    return letter


# -- transport -----------------------------------------------------------------


class JudgeClient:
    """Thin wrapper over httpx; ``transport`` lets tests swap in a mock."""

    def __init__(self, config: JudgeConfig, transport: httpx.BaseTransport | None = None):
        self.config = config
        headers = {}
        key = os.environ.get(config.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        self._http = httpx.Client(
            base_url=config.endpoint.rstrip("/"), headers=headers, timeout=config.timeout, transport=transport
        )

    def complete(self, messages: list[dict[str, str]]) -> str:
        body = {"model": self.config.model, "messages": messages, "temperature": self.config.temperature}
        resp = self._http.post("/chat/completions", json=body)
        resp.raise_for_status()
        return resp.json()["choices"][0]["message"]["content"]

    def close(self) -> None:
        self._http.close()

    def __enter__(self) -> JudgeClient:
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def _with_retry(fn, config: JudgeConfig):
    """Call fn, retrying ``config.retries`` times with exponential backoff."""
    last: Exception | None = None
    for attempt in range(config.retries + 1):
        try:
            return fn(), None
        except (httpx.HTTPError, JudgeError, KeyError, ValueError) as e:
            last = e
            log.debug("judge attempt %d failed: %s", attempt, e)
            if attempt < config.retries and config.backoff > 0:
                time.sleep(config.backoff * 2**attempt)
    return None, f"{type(last).__name__}: {last}"


# -- operations ----------------------------------------------------------------


def order_schedule(repeats: int) -> list[str]:
    """'AB' puts canonical A in slot 1; alternates starting with AB."""
    return ["AB" if r % 2 == 0 else "BA" for r in range(repeats)]


def judge_preference(
    item: QAItem,
    response_a: str,
    response_b: str,
    config: JudgeConfig,
    client: JudgeClient,
) -> PreferenceResult:
    schedule = order_schedule(config.repeats)
    question = render_prompt(item)

    def one(order: str):
        first, second = (response_a, response_b) if order == "AB" else (response_b, response_a)
        messages = build_preference_prompt(question, first, second)
        rating, err = _with_retry(lambda: parse_rating(client.complete(messages)), config)
        if rating is None:
            return None, err
        return (rating if order == "AB" else -rating), None

    with ThreadPoolExecutor(max_workers=config.max_parallel) as pool:
        outcomes = list(pool.map(one, schedule))
    ratings = [r for r, _ in outcomes]
    errors = [f"repeat {k}: {e}" for k, (_, e) in enumerate(outcomes) if e]
    ok = [r for r in ratings if r is not None]
    if not ok:
        raise JudgeError(f"{item.id}: all {config.repeats} repeats failed")
    mean = sum(ok) / len(ok)
    preferred = "A" if mean > 0 else "B" if mean < 0 else "tie"
    return PreferenceResult(item.id, ratings, mean, preferred, schedule, errors)


def judge_consistency(
    item: QAItem,
    reasoning: str,
    actual_answer: str,
    config: JudgeConfig,
    client: JudgeClient,
) -> ConsistencyResult:
    messages = build_consistency_prompt(item, reasoning)
    letter, err = _with_retry(lambda: parse_letter(client.complete(messages), item.labels), config)
    if letter is None:
        raise JudgeError(f"{item.id}: {err}")
    return ConsistencyResult(item.id, letter, actual_answer, letter == actual_answer)


def consistency_rate(results: Sequence[ConsistencyResult]) -> float:
    if not results:
        raise ValueError("no consistency results")
    return sum(r.consistent for r in results) / len(results)
