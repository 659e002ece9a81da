"""Source tables for the QA factory and their delimited-text layouts.

Every table is tab-separated with a header row. List-valued cells are
comma-separated. Booleans are ``true``/``false``; an empty cell is missing.

==================  =========================================================
file                columns
==================  =========================================================
spde.tsv            indication, gene, ensembl_id, s
tvhe_de.tsv         indication, gene_id, log2_fc, p_value, fdr, class
gi.tsv              gene, indication, feature_type, truth, score
tcgasa.tsv          indication, signature, sample, activity
signatures.tsv      name, genes
dseqde.tsv          target, context, mechanism, tested_genes, degs
pathways.tsv        name, genes
dpp.tsv             drug, cell_line, concentration, set_name, score, nes,
                    p_value, fdr, direction
dpp_pathways.tsv    name, genes (pathway library used for DPP)
dpp_ontology.tsv    parent, child (pathway hierarchy used by the DPP split)
ttp.tsv             target, decision_sm, decision_ab, druggable, structure,
                    ligand, toxicity, inflammatory_immunological,
                    cancer_biology
sd.tsv              protein_id, sequence, pocket, residues, score
==================  =========================================================
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from ..biostats import DEResult, EnrichmentResult, GeneSet
from ..io import read_table, write_table
from .dpp import PerturbationContext
from .dseqde import PerturbationContrast
from .gi import GIRecord
from .sd import Pocket, ProteinPockets
from .spde import SpatialScoreRecord
from .tcgasa import SignatureActivities
from .ttp import FIELDS


@dataclass
class CorpusSources:
    spde: list[SpatialScoreRecord] = field(default_factory=list)
    tvhe: dict[str, list[DEResult]] = field(default_factory=dict)
    gi: list[GIRecord] = field(default_factory=list)
    tcgasa: SignatureActivities | None = None
    dseqde: list[PerturbationContrast] = field(default_factory=list)
    pathway_map: dict[str, frozenset[str]] = field(default_factory=dict)
    dpp: list[PerturbationContext] = field(default_factory=list)
    ttp: list[dict[str, Any]] = field(default_factory=list)
    sd: list[ProteinPockets] = field(default_factory=list)
    dpp_library: dict[str, frozenset[str]] = field(default_factory=dict)
    dpp_ontology: list[tuple[str, str]] = field(default_factory=list)


def _b(v: bool | None) -> str:
    return "" if v is None else ("true" if v else "false")


def _pb(s: str) -> bool | None:
    s = s.strip().lower()
    if s == "":
        return None
    if s in ("true", "1", "yes"):
        return True
    if s in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _f(v: float | None) -> str:
    return "" if v is None else repr(float(v))


def _pf(s: str) -> float | None:
    return None if s.strip() == "" else float(s)


def _split(s: str) -> list[str]:
    return [x for x in s.split(",") if x]


def write_sources(directory: str | Path, src: CorpusSources) -> None:
    d = Path(directory)
    write_table(d / "spde.tsv", ["indication", "gene", "ensembl_id", "s"],
                [(r.indication, r.gene, r.ensembl_id, _f(r.s)) for r in src.spde])
    write_table(
        d / "tvhe_de.tsv",
        ["indication", "gene_id", "log2_fc", "p_value", "fdr", "class"],
        [(ind, r.gene_id, _f(r.log2_fc), _f(r.p_value), _f(r.fdr), r.de_class)
         for ind in sorted(src.tvhe) for r in src.tvhe[ind]],
    )
    write_table(d / "gi.tsv", ["gene", "indication", "feature_type", "truth", "score"],
                [(r.gene, r.indication, r.feature_type, _b(r.truth), _f(r.score)) for r in src.gi])
    if src.tcgasa is not None:
        acts = src.tcgasa
        write_table(
            d / "tcgasa.tsv",
            ["indication", "signature", "sample", "activity"],
            [(ind, sig, i, _f(v)) for (ind, sig) in sorted(acts.values) for i, v in enumerate(acts.values[(ind, sig)])],
        )
        write_table(d / "signatures.tsv", ["name", "genes"],
                    [(n, ",".join(sorted(gs.genes))) for n, gs in sorted(acts.signatures.items())])
    write_table(
        d / "dseqde.tsv",
        ["target", "context", "mechanism", "tested_genes", "degs"],
        [(c.target, c.context, c.mechanism, ",".join(sorted(c.tested_genes)), ",".join(sorted(c.degs)))
         for c in src.dseqde],
    )
    write_table(d / "pathways.tsv", ["name", "genes"],
                [(n, ",".join(sorted(g))) for n, g in sorted(src.pathway_map.items())])
    write_table(
        d / "dpp.tsv",
        ["drug", "cell_line", "concentration", "set_name", "score", "nes", "p_value", "fdr", "direction"],
        [(c.drug, c.cell_line, _f(c.concentration), r.set_name, _f(r.score), _f(r.nes), _f(r.p_value), _f(r.fdr), r.direction)
         for c in src.dpp for r in c.results],
    )
    write_table(d / "dpp_pathways.tsv", ["name", "genes"],
                [(n, ",".join(sorted(g))) for n, g in sorted(src.dpp_library.items())])
    write_table(d / "dpp_ontology.tsv", ["parent", "child"], src.dpp_ontology)
    write_table(d / "ttp.tsv", ["target", *FIELDS], [(r["target"], *(_b(r.get(f)) for f in FIELDS)) for r in src.ttp])
    write_table(
        d / "sd.tsv",
        ["protein_id", "sequence", "pocket", "residues", "score"],
        [(p.protein_id, p.sequence, k, ",".join(map(str, pk.residues)), _f(pk.score))
         for p in src.sd for k, pk in enumerate(p.pockets)],
    )


def read_sources(directory: str | Path) -> CorpusSources:
    """Load whichever family tables are present in ``directory``."""
    d = Path(directory)
    src = CorpusSources()
    if (d / "spde.tsv").exists():
        src.spde = [SpatialScoreRecord(r["indication"], r["gene"], r["ensembl_id"], float(r["s"]))
                    for r in read_table(d / "spde.tsv")]
    if (d / "tvhe_de.tsv").exists():
        tvhe: dict[str, list[DEResult]] = defaultdict(list)
        for r in read_table(d / "tvhe_de.tsv"):
            tvhe[r["indication"]].append(
                DEResult(r["gene_id"], float(r["log2_fc"]), float(r["p_value"]), float(r["fdr"]), r["class"]))
        src.tvhe = dict(tvhe)
    if (d / "gi.tsv").exists():
        src.gi = [GIRecord(r["gene"], r["indication"], r["feature_type"], _pb(r["truth"]), _pf(r["score"]))
                  for r in read_table(d / "gi.tsv")]
    if (d / "tcgasa.tsv").exists():
        raw: dict[tuple[str, str], list[tuple[int, float]]] = defaultdict(list)
        for r in read_table(d / "tcgasa.tsv"):
            raw[(r["indication"], r["signature"])].append((int(r["sample"]), float(r["activity"])))
        values = {k: np.array([v for _, v in sorted(rows)]) for k, rows in raw.items()}
        sigs = {r["name"]: GeneSet(r["name"], frozenset(_split(r["genes"]))) for r in read_table(d / "signatures.tsv")}
        src.tcgasa = SignatureActivities(values, sigs)
    if (d / "dseqde.tsv").exists():
        src.dseqde = [
            PerturbationContrast(r["target"], r["context"], r["mechanism"],
                                 frozenset(_split(r["tested_genes"])), frozenset(_split(r["degs"])))
            for r in read_table(d / "dseqde.tsv")
        ]
    if (d / "pathways.tsv").exists():
        src.pathway_map = {r["name"]: frozenset(_split(r["genes"])) for r in read_table(d / "pathways.tsv")}
    if (d / "dpp.tsv").exists():
        ctx: dict[tuple[str, str, float], list[EnrichmentResult]] = defaultdict(list)
        for r in read_table(d / "dpp.tsv"):
            ctx[(r["drug"], r["cell_line"], float(r["concentration"]))].append(
                EnrichmentResult(r["set_name"], float(r["score"]), float(r["nes"]), float(r["p_value"]),
                                 float(r["fdr"]), r["direction"]))
        src.dpp = [PerturbationContext(k[0], k[1], k[2], v) for k, v in ctx.items()]
    if (d / "dpp_pathways.tsv").exists():
        src.dpp_library = {r["name"]: frozenset(_split(r["genes"])) for r in read_table(d / "dpp_pathways.tsv")}
    if (d / "dpp_ontology.tsv").exists():
        src.dpp_ontology = [(r["parent"], r["child"]) for r in read_table(d / "dpp_ontology.tsv")]
    if (d / "ttp.tsv").exists():
        src.ttp = [{"target": r["target"], **{f: _pb(r.get(f, "")) for f in FIELDS}} for r in read_table(d / "ttp.tsv")]
    if (d / "sd.tsv").exists():
        prots: dict[str, tuple[str, list[tuple[int, Pocket]]]] = {}
        for r in read_table(d / "sd.tsv"):
            seq, pockets = prots.setdefault(r["protein_id"], (r["sequence"], []))
            pockets.append((int(r["pocket"]), Pocket(tuple(int(x) for x in _split(r["residues"])), float(r["score"]))))
        src.sd = [ProteinPockets(pid, seq, [p for _, p in sorted(pk, key=lambda t: t[0])]) for pid, (seq, pk) in prots.items()]
    return src
