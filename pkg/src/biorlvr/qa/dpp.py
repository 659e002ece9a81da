"""Drug perturbation most-perturbed-pathway items (DPP)."""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass

from ..biostats import EnrichmentResult
from ..seeding import rng_for
from .items import Generated, make_item, shuffle_options, sorted_items
from .templates import DPP_BANK

DIRECTIONS = ("upregulated", "downregulated")


@dataclass
class PerturbationContext:
    drug: str
    cell_line: str
    concentration: float
    results: list[EnrichmentResult]

    @property
    def key(self) -> tuple[str, str, float]:
        return (self.drug, self.cell_line, self.concentration)


def pathway_option(name: str, direction: str) -> str:
    return f"{name} - {direction}"


def most_perturbed(results: Sequence[EnrichmentResult], fdr: float = 0.05) -> EnrichmentResult | None:
    """Significant result with the largest |NES|; None if absent or tied."""
    sig = [r for r in results if r.fdr < fdr]
    if not sig:
        return None
    best = max(abs(r.nes) for r in sig)
    top = [r for r in sig if abs(r.nes) == best]
    return top[0] if len(top) == 1 else None


def gen_dpp(
    contexts: Iterable[PerturbationContext],
    difficulty: str = "easy",
    seed: int = 0,
    fdr: float = 0.05,
    pathway_space: Sequence[str] | None = None,
) -> Generated:
    if difficulty not in ("easy", "hard"):
        raise ValueError(f"unknown difficulty {difficulty!r}")
    contexts = sorted(contexts, key=lambda c: c.key)
    space = sorted(set(pathway_space) if pathway_space else {r.set_name for c in contexts for r in c.results})
    out = Generated()
    template = DPP_BANK["dpp"]
    n = 0
    for ctx in contexts:
        sig = [r for r in ctx.results if r.fdr < fdr]
        if not sig:
            out.warn(kind="no_significant_pathway", drug=ctx.drug, cell_line=ctx.cell_line, concentration=ctx.concentration)
            continue
        top = most_perturbed(ctx.results, fdr)
        if top is None:
            out.warn(kind="tied_top_pathway", drug=ctx.drug, cell_line=ctx.cell_line, concentration=ctx.concentration)
            continue
        rng = rng_for(seed, "DPP", difficulty, *ctx.key)
        observed = {r.set_name: r.direction for r in ctx.results}
        if difficulty == "hard":
            pool = sorted(r.set_name for r in sig if r.set_name != top.set_name)
        else:
            pool = [p for p in space if p != top.set_name]
        if not pool:
            out.warn(kind="no_distractor", drug=ctx.drug, cell_line=ctx.cell_line, difficulty=difficulty)
            continue
        other = pool[int(rng.integers(len(pool)))]
        other_dir = observed.get(other) or DIRECTIONS[int(rng.integers(2))]
        slots = {"drug": ctx.drug, "concentration": f"{ctx.concentration:g}", "cell_line": ctx.cell_line}
        item = make_item(
            item_id=f"dpp-{difficulty}-{n:06d}",
            family="DPP",
            question_type="most_perturbed_pathway",
            question=template.render(**slots),
            correct=pathway_option(top.set_name, top.direction),
            others=[pathway_option(other, other_dir)],
            subjects={"drug": [ctx.drug], "cell_line": [ctx.cell_line], "pathway": [top.set_name, other]},
            metadata={
                "difficulty": difficulty,
                "template": template.id,
                "slots": slots,
                "concentration": ctx.concentration,
                "source": {"nes": top.nes, "fdr": top.fdr, "direction": top.direction},
            },
        )
        out.items.append(shuffle_options(item, seed))
        n += 1
    out.items = sorted_items(out.items)
    return out
