"""Structural druggability pocket comparisons (SD)."""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass

from ..seeding import rng_for
from .items import Generated, make_item, shuffle_options, sorted_items
from .templates import SD_BANK


@dataclass(frozen=True)
class Pocket:
    residues: tuple[int, ...]  # 1-based sequence positions, in pocket order
    score: float


@dataclass
class ProteinPockets:
    protein_id: str
    sequence: str
    pockets: list[Pocket]


def render_sequence(seq: str) -> str:
    return " ".join(f"{aa}{i}" for i, aa in enumerate(seq, start=1))


def render_residues(seq: str, residues: Sequence[int]) -> str:
    for r in residues:
        if not 1 <= r <= len(seq):
            raise ValueError(f"residue index {r} outside sequence of length {len(seq)}")
    return " ".join(f"{seq[r - 1]}{r}" for r in residues)


def gen_sd(proteins: Iterable[ProteinPockets], seed: int = 0) -> Generated:
    out = Generated()
    template = SD_BANK["sd"]
    for prot in sorted(proteins, key=lambda p: p.protein_id):
        if len(prot.pockets) < 2:
            out.warn(kind="single_pocket", protein=prot.protein_id)
            continue
        best = max(p.score for p in prot.pockets)
        top = [p for p in prot.pockets if p.score == best]
        if len(top) > 1:
            out.warn(kind="tied_top_score", protein=prot.protein_id)
            continue
        correct = render_residues(prot.sequence, top[0].residues)
        others = sorted(
            {render_residues(prot.sequence, p.residues) for p in prot.pockets if p is not top[0]} - {correct}
        )
        if not others:
            out.warn(kind="no_distinct_distractor", protein=prot.protein_id)
            continue
        rng = rng_for(seed, "SD", prot.protein_id)
        other = others[int(rng.integers(len(others)))]
        slots = {"sequence": render_sequence(prot.sequence)}
        item = make_item(
            item_id=f"sd-{prot.protein_id}",
            family="SD",
            question_type="druggability",
            question=template.render(**slots),
            correct=correct,
            others=[other],
            subjects={"protein": [prot.protein_id]},
            metadata={"template": template.id, "slots": slots, "top_score": best},
        )
        out.items.append(shuffle_options(item, seed))
    out.items = sorted_items(out.items)
    return out
