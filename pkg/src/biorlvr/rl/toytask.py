"""Planted-rule toy task: the answer letter is fixed by a cue word in the prompt."""

from __future__ import annotations

from dataclasses import dataclass

from ..qa.items import Option, QAItem
from ..seeding import rng_for

CLASSES = ("class alpha", "class beta")


@dataclass
class ToyTask:
    train: list[QAItem]
    test: list[QAItem]
    rule: dict[str, str]  # cue word -> answer letter


def _item(split: str, i: int, cue_idx: int, cue: str, letter: str) -> QAItem:
    return QAItem(
        id=f"toy-{split}-{i:05d}",
        family="TOY",
        question_type="planted_rule",
        question=f"Sample {i} carries marker {cue}. Which class does it belong to?",
        options=[Option("A", CLASSES[0]), Option("B", CLASSES[1])],
        answer=letter,
        subjects={"sample": [f"{split}-{i}"]},
        metadata={"cue": cue_idx, "cue_word": cue},
        split=split,
    )


def make_toy_task(n_train: int = 2000, n_test: int = 500, n_cues: int = 8, seed: int = 0) -> ToyTask:
    """Half of the cues map to A and half to B; cues are drawn uniformly per item."""
    rng = rng_for(seed, "toy-task")
    cues = [f"m{k:02d}" for k in range(n_cues)]
    letters = ["A"] * (n_cues // 2) + ["B"] * (n_cues - n_cues // 2)
    letters = [letters[j] for j in rng.permutation(n_cues)]
    rule = dict(zip(cues, letters))
    out = {}
    for split, n in (("train", n_train), ("test", n_test)):
        draws = rng.integers(0, n_cues, size=n)
        out[split] = [_item(split, i, int(k), cues[k], letters[k]) for i, k in enumerate(draws)]
    return ToyTask(out["train"], out["test"], rule)
