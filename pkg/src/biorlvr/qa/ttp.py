"""Target tractability and properties Yes/No items (TTP)."""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from typing import Any

from ..seeding import rng_for
from .items import Generated, make_item, shuffle_options, sorted_items
from .templates import TTP_BANK, TemplateBank

FIELDS = (
    "decision_sm",
    "decision_ab",
    "druggable",
    "structure",
    "ligand",
    "toxicity",
    "inflammatory_immunological",
    "cancer_biology",
)


def field_value(row: Mapping[str, Any], name: str) -> bool | None:
    """Annotation flag, with ``any_modality`` derived from the two decisions."""
    if name == "any_modality":
        sm, ab = row.get("decision_sm"), row.get("decision_ab")
        if sm is True or ab is True:
            return True
        if sm is None or ab is None:
            return None
        return False
    v = row.get(name)
    return None if v is None else bool(v)


def gen_ttp(
    annotations: Sequence[Mapping[str, Any]],
    bank: TemplateBank = TTP_BANK,
    seed: int = 0,
    variant_rate: float = 0.3,
) -> Generated:
    """Base templates for every row; alt/negative variants at ``variant_rate``.

    Identical question texts are collapsed to their first occurrence. When
    the dropped copy carries a different key a conflict record is logged.
    """
    out = Generated()
    templates = sorted(bank, key=lambda t: t.id)
    kept: dict[str, Any] = {}
    n = 0
    for row_idx, row in enumerate(annotations):
        target = row["target"]
        for t in templates:
            qtype = t.extra["question_type"]
            variant = bool(t.tags)
            if variant and rng_for(seed, "TTP-variant", row_idx, qtype).random() >= variant_rate:
                continue
            value = field_value(row, t.extra["field"])
            if value is None:
                out.warn(kind="missing_field", target=target, template=t.id, field=t.extra["field"])
                continue
            yes, no = t.extra["yes_no"]
            truth = value != t.extra["negated"]
            correct, other = (yes, no) if truth else (no, yes)
            question = t.render(target=target)
            if question in kept:
                first = kept[question]
                record = {"question": question, "kept": first.id, "dropped_row": row_idx, "dropped_template": t.id}
                if first.correct_text != correct:
                    out.warn(kind="conflict", **record)
                else:
                    out.warn(kind="duplicate", **record)
                continue
            base = bank[f"ttp.{qtype.removesuffix('_alt').removesuffix('_negative')}"]
            item = make_item(
                item_id=f"ttp-{n:06d}",
                family="TTP",
                question_type=qtype,
                question=question,
                correct=correct,
                others=[other],
                subjects={"target": [target]},
                metadata={
                    "template": t.id,
                    "slots": {"target": target},
                    "target_protein": target,
                    "original_question": base.render(target=target),
                    "original_answer": value,
                    "answer_type": "binary",
                    "question_category": t.extra["field"],
                    "template_used": t.pattern,
                    "data_row_index": row_idx,
                    "is_alternative_phrasing": "alt" in t.tags,
                    "is_negative_example": "negative" in t.tags,
                    "original_phrasing": base.pattern,
                },
            )
            item = shuffle_options(item, seed)
            kept[question] = item
            out.items.append(item)
            n += 1
    out.items = sorted_items(out.items)
    return out
