"""Gene-indication True/False statements (GI)."""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

from ..seeding import rng_for
from .items import Generated, make_item, shuffle_options, sorted_items
from .templates import GI_ABUNDANCE, GI_BANK, GI_FEATURES, TemplateBank


@dataclass(frozen=True)
class GIRecord:
    gene: str
    indication: str
    feature_type: str
    truth: bool | None
    score: float | None = None


def gen_gi(
    records: Iterable[GIRecord],
    bank: TemplateBank = GI_BANK,
    seed: int = 0,
    abundance: Sequence[str] = GI_ABUNDANCE,
) -> Generated:
    """One technically rephrased True/False item per usable source record."""
    out = Generated()
    by_feature: dict[str, list] = {}
    for t in bank:
        by_feature.setdefault(t.extra["feature_type"], []).append(t)
    for templates in by_feature.values():
        templates.sort(key=lambda t: t.id)

    ordered = sorted(records, key=lambda r: (r.indication, r.gene, r.feature_type))
    n = 0
    for rec in ordered:
        if rec.score is None or (isinstance(rec.score, float) and math.isnan(rec.score)) or rec.truth is None:
            out.warn(kind="missing_score", gene=rec.gene, indication=rec.indication, feature_type=rec.feature_type)
            continue
        templates = by_feature.get(rec.feature_type)
        if not templates:
            out.warn(kind="unknown_feature_type", feature_type=rec.feature_type)
            continue
        rng = rng_for(seed, "GI", rec.gene, rec.indication, rec.feature_type, n)
        template = templates[int(rng.integers(len(templates)))]
        slots = {
            "gene": rec.gene,
            "indication": rec.indication,
            "abundance": abundance[int(rng.integers(len(abundance)))],
        }
        slots = {k: v for k, v in slots.items() if k in template.slots}
        base = GI_FEATURES[rec.feature_type][0].format(gene=rec.gene, indication=rec.indication)
        correct, other = ("True", "False") if rec.truth else ("False", "True")
        item = make_item(
            item_id=f"gi-{n:07d}",
            family="GI",
            question_type=rec.feature_type,
            question=template.render(**slots),
            correct=correct,
            others=[other],
            subjects={"gene": [rec.gene], "indication": [rec.indication]},
            metadata={
                "label": bool(rec.truth),
                "feature_type": rec.feature_type,
                "template": template.id,
                "slots": slots,
                "original_question": base,
                "score": rec.score,
            },
        )
        out.items.append(shuffle_options(item, seed))
        n += 1
    out.items = sorted_items(out.items)
    return out
