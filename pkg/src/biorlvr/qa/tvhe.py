"""Tumour vs healthy-tissue expression (TvHE) items from DE tables."""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass

from ..biostats import DEResult
from ..seeding import rng_for
from .items import Generated, make_item, shuffle_options, sorted_items
from .templates import (
    TVHE_ABUNDANCE,
    TVHE_BANK,
    TVHE_NORMAL_TERMS,
    TVHE_TUMOUR_TERMS,
    TemplateBank,
)

QUESTION_TYPE = "expression_tumour_vs_healthy"


@dataclass(frozen=True)
class TvheVocab:
    """Synonym pools the phrasing variant is drawn from."""

    abundance: tuple[str, ...] = TVHE_ABUNDANCE
    tumour_terms: tuple[str, ...] = TVHE_TUMOUR_TERMS
    normal_terms: tuple[str, ...] = TVHE_NORMAL_TERMS


def tissue_options(style: str, indication: str, tumour_term: str, normal_term: str) -> tuple[str, str]:
    """(tumour-side text, normal-side text) for an option style."""
    if style == "indication":
        return f"{indication} tumor tissue", f"{indication} adjacent normal tissue"
    tumour = "neoplastic tissue" if tumour_term.startswith("neoplastic") else "tumour tissue"
    return tumour, normal_term


def gen_tvhe(
    de: Mapping[str, Sequence[DEResult]],
    bank: TemplateBank = TVHE_BANK,
    seed: int = 0,
    vocab: TvheVocab = TvheVocab(),
) -> Generated:
    """Exactly one phrasing variant per eligible (gene, indication) pair."""
    out = Generated()
    templates = sorted(bank, key=lambda t: t.id)
    n = 0
    for indication in sorted(de):
        for res in sorted(de[indication], key=lambda r: r.gene_id):
            if res.de_class == "excluded":
                continue
            rng = rng_for(seed, "TvHE", indication, res.gene_id)
            template = templates[int(rng.integers(len(templates)))]
            tumour_term = vocab.tumour_terms[int(rng.integers(len(vocab.tumour_terms)))]
            normal_term = vocab.normal_terms[int(rng.integers(len(vocab.normal_terms)))]
            abundance = vocab.abundance[int(rng.integers(len(vocab.abundance)))]
            slots = {
                "gene": res.gene_id,
                "indication": indication,
                "tumour_term": tumour_term,
                "normal_term": normal_term,
                "abundance": abundance,
            }
            slots = {k: v for k, v in slots.items() if k in template.slots}
            tumour_opt, normal_opt = tissue_options(
                template.extra.get("option_style", "short"), indication, tumour_term, normal_term
            )
            correct, other = (tumour_opt, normal_opt) if res.de_class == "tumour_up" else (normal_opt, tumour_opt)
            item = make_item(
                item_id=f"tvhe-{n:07d}",
                family="TvHE",
                question_type=QUESTION_TYPE,
                question=template.render(**slots),
                correct=correct,
                others=[other],
                subjects={"gene": [res.gene_id], "indication": [indication]},
                metadata={
                    "direction": res.de_class,
                    "template": template.id,
                    "slots": slots,
                    "variant": sorted(template.tags),
                    "tumour_option": tumour_opt,
                    "normal_option": normal_opt,
                    "source": {"log2_fc": res.log2_fc, "fdr": res.fdr},
                },
            )
            out.items.append(shuffle_options(item, seed))
            n += 1
    out.items = sorted_items(out.items)
    return out
