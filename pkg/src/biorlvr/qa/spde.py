"""Spatial tumour-islet vs stroma differential expression (SPDE) items."""

from __future__ import annotations

import math
from collections import defaultdict
from collections.abc import Iterable
from dataclasses import dataclass

from ..biostats import quantile
from ..seeding import rng_for
from .items import Generated, make_item, shuffle_options, sorted_items
from .templates import SPDE_BANK

UP, DOWN = "upregulated", "downregulated"


@dataclass(frozen=True)
class SpatialScoreRecord:
    indication: str
    gene: str
    ensembl_id: str
    s: float


@dataclass
class SpdePools:
    q_hi: float
    q_lo: float
    positives: dict[str, list[SpatialScoreRecord]]
    distractors: dict[str, list[SpatialScoreRecord]]


def spde_pools(
    records: list[SpatialScoreRecord],
    upper: float = 0.99,
    lower: float = 0.01,
    up_distractor_max: float = 0.5,
    down_distractor_min: float = -0.5,
) -> SpdePools:
    """Tail positives and non-tail distractors for one indication."""
    scores = [r.s for r in records]
    q_hi, q_lo = quantile(scores, upper), quantile(scores, lower)
    up_pos = [r for r in records if r.s >= q_hi]
    down_pos = [r for r in records if r.s <= q_lo]
    # distractors sit outside the queried tail
    up_dis = [r for r in records if r.s <= up_distractor_max and r.s < q_hi]
    down_dis = [r for r in records if r.s >= down_distractor_min and r.s > q_lo]
    return SpdePools(q_hi, q_lo, {UP: up_pos, DOWN: down_pos}, {UP: up_dis, DOWN: down_dis})


def option_text(rec: SpatialScoreRecord) -> str:
    return f"{rec.gene} (ensembl {rec.ensembl_id})"


def gen_spde(
    records: Iterable[SpatialScoreRecord],
    per_indication_count: int = 200,
    seed: int = 0,
) -> Generated:
    out = Generated()
    by_indication: dict[str, list[SpatialScoreRecord]] = defaultdict(list)
    seen: set[tuple[str, str]] = set()
    for rec in records:
        if rec.s is None or not math.isfinite(rec.s):
            out.warn(kind="missing_score", indication=rec.indication, gene=rec.gene)
            continue
        if (rec.indication, rec.gene) in seen:
            out.warn(kind="duplicate_gene", indication=rec.indication, gene=rec.gene)
            continue
        seen.add((rec.indication, rec.gene))
        by_indication[rec.indication].append(rec)

    template = SPDE_BANK["spde"]
    for ind_idx, indication in enumerate(sorted(by_indication)):
        recs = sorted(by_indication[indication], key=lambda r: r.gene)
        pools = spde_pools(recs)
        usable = [d for d in (UP, DOWN) if pools.positives[d] and pools.distractors[d]]
        if not usable:
            out.warn(kind="insufficient_pool", indication=indication, n_genes=len(recs))
            continue
        for d in (UP, DOWN):
            if d not in usable:
                out.warn(kind="insufficient_pool", indication=indication, direction=d)
        rng = rng_for(seed, "SPDE", indication)
        for k in range(per_indication_count):
            direction = usable[k % len(usable)]
            pos_pool, dis_pool = pools.positives[direction], pools.distractors[direction]
            pos = pos_pool[int(rng.integers(len(pos_pool)))]
            dis = dis_pool[int(rng.integers(len(dis_pool)))]
            slots = {"direction": direction, "indication": indication}
            item = make_item(
                item_id=f"spde-{ind_idx:03d}-{k:06d}",
                family="SPDE",
                question_type=direction,
                question=template.render(**slots),
                correct=option_text(pos),
                others=[option_text(dis)],
                subjects={"indication": [indication], "gene": [pos.gene, dis.gene]},
                metadata={
                    "direction": direction,
                    "template": template.id,
                    "slots": slots,
                    "source_scores": {pos.gene: pos.s, dis.gene: dis.s},
                    "tail_threshold": pools.q_hi if direction == UP else pools.q_lo,
                },
            )
            out.items.append(shuffle_options(item, seed))
    out.items = sorted_items(out.items)
    return out
