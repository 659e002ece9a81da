"""Target-perturbation deregulation items (DSeqDE)."""

from __future__ import annotations

from collections import defaultdict
from collections.abc import Iterable, Mapping
from dataclasses import dataclass

from ..seeding import rng_for
from .items import Generated, make_item, shuffle_options, sorted_items
from .templates import DSEQDE_BANK

QUESTION_KINDS = ("yes_no_gene", "pairwise_gene", "pairwise_pathway")
LOF_KEYWORDS = ("inhibitor", "antagonist", "degrader", "blocker", "inverse agonist")


@dataclass(frozen=True)
class PerturbationContrast:
    """DEGs of one (target, context) contrast within its tested gene universe."""

    target: str
    context: str
    mechanism: str
    tested_genes: frozenset[str]
    degs: frozenset[str]


def is_loss_of_function(mechanism: str) -> bool:
    m = mechanism.lower()
    return any(k in m for k in LOF_KEYWORDS)


def deregulated_pathways(
    degs: frozenset[str], tested: frozenset[str], pathway_map: Mapping[str, frozenset[str]], min_hits: int = 2
) -> tuple[list[str], list[str]]:
    """(deregulated, untouched) pathways: >= min_hits DEGs vs zero DEGs but tested genes."""
    hit, miss = [], []
    for name in sorted(pathway_map):
        genes = pathway_map[name]
        n = len(genes & degs)
        if n >= min_hits:
            hit.append(name)
        elif n == 0 and genes & tested:
            miss.append(name)
    return hit, miss


def _sample(rng, pool: list[str], k: int) -> list[str]:
    if k >= len(pool):
        return list(pool)
    return [pool[i] for i in sorted(rng.choice(len(pool), size=k, replace=False))]


def gen_dseqde(
    contrasts: Iterable[PerturbationContrast],
    question_kind: str,
    pathway_map: Mapping[str, frozenset[str]] | None = None,
    seed: int = 0,
    max_per_contrast: int | None = None,
    min_pathway_hits: int = 2,
) -> Generated:
    if question_kind not in QUESTION_KINDS:
        raise ValueError(f"unknown DSeqDE question kind {question_kind!r}")
    if question_kind == "pairwise_pathway" and not pathway_map:
        raise ValueError("pairwise_pathway needs a pathway map")
    out = Generated()
    template = DSEQDE_BANK[f"dseqde.{question_kind}"]

    by_target: dict[str, list[PerturbationContrast]] = defaultdict(list)
    for c in contrasts:
        if not is_loss_of_function(c.mechanism):
            out.warn(kind="not_loss_of_function", target=c.target, context=c.context, mechanism=c.mechanism)
            continue
        by_target[c.target].append(c)

    n = 0
    for target in sorted(by_target):
        emitted = n_pos = 0
        for c in sorted(by_target[target], key=lambda c: c.context):
            rng = rng_for(seed, "DSeqDE", question_kind, c.target, c.context)
            if question_kind == "pairwise_pathway":
                pos_pool, neg_pool = deregulated_pathways(c.degs, c.tested_genes, pathway_map, min_pathway_hits)
                role = "pathway"
            else:
                pos_pool = sorted(c.degs & c.tested_genes)
                neg_pool = sorted(c.tested_genes - c.degs)
                role = "gene"
            n_pos += len(pos_pool)
            k = min(len(pos_pool), len(neg_pool))
            if max_per_contrast is not None:
                k = min(k, max_per_contrast)
            if k == 0:
                continue
            # balance: equal positives and negatives, downsampling whichever side is larger
            pos = _sample(rng, pos_pool, k)
            neg = _sample(rng, neg_pool, k)
            if question_kind == "yes_no_gene":
                rows = [(g, True) for g in pos] + [(g, False) for g in neg]
                for gene, label in rows:
                    slots = {"target": target, "gene": gene, "context": c.context}
                    correct, other = ("Yes", "No") if label else ("No", "Yes")
                    subjects = {"target": [target], "gene": [gene], "context": [c.context]}
                    meta = {"label": label}
                    out.items.append(_emit(template, n, slots, correct, other, subjects, meta, question_kind, seed))
                    n += 1
            else:
                order = rng.permutation(k)
                for p, q in zip(pos, [neg[i] for i in order]):
                    slots = {"target": target, "context": c.context}
                    subjects = {"target": [target], role: [p, q], "context": [c.context]}
                    meta = {"deregulated": p, "not_deregulated": q}
                    out.items.append(_emit(template, n, slots, p, q, subjects, meta, question_kind, seed))
                    n += 1
            emitted += k
        if n_pos == 0:
            out.warn(kind="no_positives", target=target, question_kind=question_kind)
        elif emitted == 0:
            out.warn(kind="no_negatives", target=target, question_kind=question_kind)
    out.items = sorted_items(out.items)
    return out


def _emit(template, n, slots, correct, other, subjects, meta, question_kind, seed):
    item = make_item(
        item_id=f"dseqde-{question_kind}-{n:07d}",
        family="DSeqDE",
        question_type=question_kind,
        question=template.render(**slots),
        correct=correct,
        others=[other],
        subjects=subjects,
        metadata={"template": template.id, "slots": slots, **meta},
    )
    return shuffle_options(item, seed)
