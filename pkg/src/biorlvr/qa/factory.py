"""Run every family generator over one set of source tables."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from .dpp import gen_dpp
from .dseqde import QUESTION_KINDS, gen_dseqde
from .gi import gen_gi
from .items import Generated, QAItem, sorted_items
from .sd import gen_sd
from .sources import CorpusSources
from .spde import gen_spde
from .tcgasa import SUBTYPES, TCGASAConfig, gen_tcgasa
from .ttp import gen_ttp
from .tvhe import gen_tvhe


@dataclass
class FactoryConfig:
    spde_per_indication: int = 200
    tcgasa: TCGASAConfig = field(default_factory=TCGASAConfig)
    tcgasa_metric: str = "wasserstein"
    dseqde_max_per_contrast: int | None = None
    dseqde_min_pathway_hits: int = 2
    dpp_difficulties: tuple[str, ...] = ("easy", "hard")
    ttp_variant_rate: float = 0.3
    families: tuple[str, ...] = ("SPDE", "TvHE", "GI", "TCGA-SA", "DSeqDE", "DPP", "TTP", "SD")

    @classmethod
    def from_dict(cls, d: dict) -> FactoryConfig:
        d = dict(d)
        tc = TCGASAConfig(**d.pop("tcgasa", {}))
        for k in ("dpp_difficulties", "families"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(tcgasa=tc, **d)


def generate_corpus(src: CorpusSources, seed: int = 0, config: FactoryConfig | None = None) -> Generated:
    """All requested families; items sorted by id, issues tagged by family."""
    cfg = config or FactoryConfig()
    out = Generated()

    def take(family: str, g: Generated) -> None:
        out.items.extend(g.items)
        out.issues.extend({"family": family, **rec} for rec in g.issues)

    fams = set(cfg.families)
    if "SPDE" in fams and src.spde:
        take("SPDE", gen_spde(src.spde, cfg.spde_per_indication, seed))
    if "TvHE" in fams and src.tvhe:
        take("TvHE", gen_tvhe(src.tvhe, seed=seed))
    if "GI" in fams and src.gi:
        take("GI", gen_gi(src.gi, seed=seed))
    if "TCGA-SA" in fams and src.tcgasa is not None:
        for sub in SUBTYPES:
            take("TCGA-SA", gen_tcgasa(src.tcgasa, sub, cfg.tcgasa_metric, cfg.tcgasa, seed))
    if "DSeqDE" in fams and src.dseqde:
        for kind in QUESTION_KINDS:
            if kind == "pairwise_pathway" and not src.pathway_map:
                continue
            take(
                "DSeqDE",
                gen_dseqde(
                    src.dseqde,
                    kind,
                    src.pathway_map,
                    seed,
                    cfg.dseqde_max_per_contrast,
                    cfg.dseqde_min_pathway_hits,
                ),
            )
    if "DPP" in fams and src.dpp:
        for diff in cfg.dpp_difficulties:
            take("DPP", gen_dpp(src.dpp, diff, seed))
    if "TTP" in fams and src.ttp:
        take("TTP", gen_ttp(src.ttp, seed=seed, variant_rate=cfg.ttp_variant_rate))
    if "SD" in fams and src.sd:
        take("SD", gen_sd(src.sd, seed))
    out.items = sorted_items(out.items)
    return out


def question_type_histogram(items: list[QAItem]) -> dict[str, int]:
    return dict(sorted(Counter(f"{it.family}/{it.question_type}" for it in items).items()))
