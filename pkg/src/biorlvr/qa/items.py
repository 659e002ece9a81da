"""QAItem record, option shuffling, schema validation and JSONL I/O."""

from __future__ import annotations

import json
import logging
import string
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from ..seeding import derive_seed

log = logging.getLogger(__name__)

FAMILIES = ("SPDE", "TvHE", "GI", "TCGA-SA", "DSeqDE", "DPP", "TTP", "SD")
LETTERS = string.ascii_uppercase


class QAError(ValueError):
    pass


@dataclass(frozen=True)
class Option:
    label: str
    text: str


@dataclass
class QAItem:
    id: str
    family: str
    question_type: str
    question: str
    options: list[Option]
    answer: str
    subjects: dict[str, list[str]]
    metadata: dict[str, Any] = field(default_factory=dict)
    split: str | None = None

    @property
    def labels(self) -> list[str]:
        return [o.label for o in self.options]

    def option_text(self, label: str) -> str:
        for o in self.options:
            if o.label == label:
                return o.text
        raise KeyError(label)

    @property
    def correct_text(self) -> str:
        return self.option_text(self.answer)

    def validate(self) -> None:
        if self.family not in FAMILIES and not self.family.startswith("TOY"):
            raise QAError(f"{self.id}: unknown family {self.family!r}")
        if self.answer not in self.labels:
            raise QAError(f"{self.id}: answer {self.answer!r} is not an option label")
        texts = [o.text for o in self.options]
        if len(set(texts)) != len(texts):
            raise QAError(f"{self.id}: option texts are not distinct")
        if len(set(self.labels)) != len(self.labels):
            raise QAError(f"{self.id}: duplicate option labels")
        if not self.subjects or not any(self.subjects.values()):
            raise QAError(f"{self.id}: no subjects")

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "family": self.family,
            "question_type": self.question_type,
            "question": self.question,
            "options": [asdict(o) for o in self.options],
            "answer": self.answer,
            "subjects": self.subjects,
            "metadata": self.metadata,
            "split": self.split,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> QAItem:
        return cls(
            id=d["id"],
            family=d["family"],
            question_type=d["question_type"],
            question=d["question"],
            options=[Option(o["label"], o["text"]) for o in d["options"]],
            answer=d["answer"],
            subjects={k: list(v) for k, v in d["subjects"].items()},
            metadata=d.get("metadata", {}),
            split=d.get("split"),
        )


@dataclass
class Generated:
    """Items plus non-fatal issues (insufficient pools, conflicts, skips)."""

    items: list[QAItem] = field(default_factory=list)
    issues: list[dict[str, Any]] = field(default_factory=list)

    def warn(self, **record: Any) -> None:
        log.debug("%s", record)
        self.issues.append(record)


def make_item(
    *,
    item_id: str,
    family: str,
    question_type: str,
    question: str,
    correct: str,
    others: Sequence[str],
    subjects: dict[str, list[str]],
    metadata: dict[str, Any],
) -> QAItem:
    """Item with the correct option in slot A; callers shuffle afterwards."""
    texts = [correct, *others]
    options = [Option(LETTERS[i], t) for i, t in enumerate(texts)]
    item = QAItem(item_id, family, question_type, question, options, "A", subjects, metadata)
    item.validate()
    return item


def shuffle_options(item: QAItem, seed: int) -> QAItem:
    """Reassign letters with a generator keyed by (seed, item id).

    Only the letters move: option texts and the correct content are kept.
    """
    rng = np.random.default_rng(derive_seed("shuffle", seed, item.id))
    correct = item.correct_text
    perm = rng.permutation(len(item.options))
    texts = [item.options[i].text for i in perm]
    options = [Option(LETTERS[i], t) for i, t in enumerate(texts)]
    answer = options[texts.index(correct)].label
    return replace(item, options=options, answer=answer, metadata=dict(item.metadata))


def render_prompt(item: QAItem) -> str:
    """Question followed by lettered options, one per line."""
    lines = [item.question]
    lines += [f"{o.label}) {o.text}" for o in item.options]
    return "\n".join(lines)


def sorted_items(items: Iterable[QAItem]) -> list[QAItem]:
    return sorted(items, key=lambda it: it.id)


def dumps_item(item: QAItem) -> str:
    return json.dumps(item.to_dict(), ensure_ascii=False, sort_keys=True)


def write_jsonl(path: str | Path, records: Iterable[dict[str, Any] | QAItem]) -> int:
    from ..io import atomic_write_text

    lines = []
    for rec in records:
        if isinstance(rec, QAItem):
            lines.append(dumps_item(rec))
        else:
            lines.append(json.dumps(rec, ensure_ascii=False, sort_keys=True))
    atomic_write_text(path, "".join(line + "\n" for line in lines))
    return len(lines)


def iter_jsonl(path: str | Path) -> Iterator[dict[str, Any]]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)


def read_items(path: str | Path) -> list[QAItem]:
    return [QAItem.from_dict(d) for d in iter_jsonl(path)]
