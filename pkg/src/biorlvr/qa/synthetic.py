"""Synthetic source tables with planted structure for every family.

Used by the offline CLI mode and by the corpus-level tests. Entity names
are synthetic (G00001, IND03, ...) so nothing here resembles real data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..biostats import (
    ExpressionMatrix,
    GeneSet,
    differential_expression,
    enrichment_with_significance,
)
from ..seeding import rng_for
from .dpp import PerturbationContext
from .dseqde import PerturbationContrast
from .gi import GIRecord
from .sd import Pocket, ProteinPockets
from .sources import CorpusSources
from .spde import SpatialScoreRecord
from .tcgasa import SignatureActivities
from .templates import GI_FEATURES
from .ttp import FIELDS

AMINO = "ACDEFGHIKLMNPQRSTVWY"


@dataclass
class SyntheticSizes:
    spde_indications: int = 6
    spde_genes: int = 3000
    tvhe_indications: int = 8
    tvhe_genes: int = 400
    gi_genes: int = 500
    gi_indications: int = 6
    gi_feature_fraction: float = 0.25
    tcgasa_indications: int = 12
    tcgasa_signatures: int = 40
    tcgasa_genes: int = 600
    tcgasa_samples: int = 40
    dseqde_targets: int = 40
    dseqde_contexts: int = 2
    dseqde_genes: int = 300
    dseqde_pathways: int = 100
    dpp_drugs: int = 12
    dpp_cell_lines: int = 5
    dpp_concentrations: tuple[float, ...] = (0.05, 5.0)
    dpp_genes: int = 400
    dpp_pathways: int = 40
    dpp_n_perm: int = 300
    ttp_targets: int = 400
    ttp_conflicting_duplicates: int = 10
    sd_proteins: int = 1500

    def scaled(self, scale: float) -> SyntheticSizes:
        """Shrink or grow the entity counts that drive corpus size."""

        def s(n: int, lo: int) -> int:
            return max(lo, int(round(n * scale)))

        return SyntheticSizes(
            spde_indications=s(self.spde_indications, 2),
            spde_genes=s(self.spde_genes, 200),
            tvhe_indications=s(self.tvhe_indications, 2),
            tvhe_genes=s(self.tvhe_genes, 60),
            gi_genes=s(self.gi_genes, 20),
            gi_indications=self.gi_indications,
            gi_feature_fraction=self.gi_feature_fraction,
            # cancer types and signatures are few and cheap; small counts leave splits empty
            tcgasa_indications=self.tcgasa_indications,
            tcgasa_signatures=s(self.tcgasa_signatures, 24),
            tcgasa_genes=self.tcgasa_genes,
            tcgasa_samples=self.tcgasa_samples,
            dseqde_targets=s(self.dseqde_targets, 4),
            dseqde_contexts=self.dseqde_contexts,
            dseqde_genes=self.dseqde_genes,
            dseqde_pathways=self.dseqde_pathways,
            dpp_drugs=s(self.dpp_drugs, 2),
            dpp_cell_lines=self.dpp_cell_lines,
            dpp_concentrations=self.dpp_concentrations,
            dpp_genes=self.dpp_genes,
            dpp_pathways=self.dpp_pathways,
            dpp_n_perm=self.dpp_n_perm,
            ttp_targets=s(self.ttp_targets, 10),
            ttp_conflicting_duplicates=min(self.ttp_conflicting_duplicates, s(self.ttp_targets, 10)),
            sd_proteins=s(self.sd_proteins, 10),
        )


def _genes(prefix: str, n: int) -> list[str]:
    return [f"{prefix}{i:05d}" for i in range(1, n + 1)]


def synth_spde(seed: int, sz: SyntheticSizes) -> list[SpatialScoreRecord]:
    rng = rng_for(seed, "synthetic", "SPDE")
    genes = _genes("G", sz.spde_genes)
    out = []
    for k in range(sz.spde_indications):
        s = rng.normal(0.0, 1.0, size=len(genes))
        out += [
            SpatialScoreRecord(f"Indication {k:02d}", g, f"ENSG{10_000_000 + i:011d}", float(v))
            for i, (g, v) in enumerate(zip(genes, s))
        ]
    return out


def synth_tvhe_cohorts(seed: int, sz: SyntheticSizes, n_tumour: int = 20, n_normal: int = 6) -> dict[str, ExpressionMatrix]:
    """Tumour/normal cohorts where a third of genes carry an 8-fold planted shift."""
    rng = rng_for(seed, "synthetic", "TvHE")
    genes = _genes("T", sz.tvhe_genes)
    cohorts = {}
    for k in range(sz.tvhe_indications):
        base = 2.0 ** rng.normal(5.0, 1.0, size=len(genes))
        shift = rng.choice([-3.0, 0.0, 0.0, 0.0, 3.0, 0.0], size=len(genes))
        tumour = base * 2.0 ** shift * 2.0 ** rng.normal(0, 0.5, size=(n_tumour, len(genes)))
        normal = base * 2.0 ** rng.normal(0, 0.5, size=(n_normal, len(genes)))
        labels = ["tumour"] * n_tumour + ["normal"] * n_normal
        cohorts[f"cohort {k:02d} (C{k:02d})"] = ExpressionMatrix(np.vstack([tumour, normal]), labels, genes)
    return cohorts


def synth_gi(seed: int, sz: SyntheticSizes) -> list[GIRecord]:
    rng = rng_for(seed, "synthetic", "GI")
    features = sorted(GI_FEATURES)
    out = []
    for g in _genes("H", sz.gi_genes):
        for k in range(sz.gi_indications):
            for f in features:
                if rng.random() >= sz.gi_feature_fraction:
                    continue
                score = float(rng.normal())
                # ~1% of records lose their score and must be skipped
                missing = rng.random() < 0.01
                out.append(GIRecord(g, f"indication {k:02d}", f, score > 0.0, None if missing else score))
    return out


def synth_tcgasa(seed: int, sz: SyntheticSizes) -> SignatureActivities:
    """Cohorts with per-indication programme shifts, scored by ssGSEA."""
    rng = rng_for(seed, "synthetic", "TCGA-SA")
    genes = _genes("S", sz.tcgasa_genes)
    library = []
    for j in range(sz.tcgasa_signatures):
        size = int(rng.integers(5, 40))
        members = rng.choice(len(genes), size=size, replace=False)
        library.append(GeneSet(f"compound_{j:03d}", frozenset(genes[i] for i in members)))
    cohorts = {}
    for k in range(sz.tcgasa_indications):
        base = rng.normal(0, 1, size=len(genes))
        for gs in library:
            idx = [genes.index(g) for g in sorted(gs.genes)]
            base[idx] += rng.normal(0, 1.5)
        values = base + rng.normal(0, 1, size=(sz.tcgasa_samples, len(genes)))
        cohorts[f"Cancer type {k:02d}"] = ExpressionMatrix(values, ["tumour"] * sz.tcgasa_samples, genes)
    return SignatureActivities.from_expression(cohorts, library)


MECHANISMS = (
    "ATP-competitive inhibitor",
    "allosteric inhibitor",
    "covalent inhibitor",
    "antagonist",
    "degrader",
)


def synth_dseqde(seed: int, sz: SyntheticSizes) -> tuple[list[PerturbationContrast], dict[str, frozenset[str]]]:
    rng = rng_for(seed, "synthetic", "DSeqDE")
    genes = _genes("D", sz.dseqde_genes)
    pathways = {}
    for p in range(sz.dseqde_pathways):
        members = rng.choice(len(genes), size=int(rng.integers(8, 25)), replace=False)
        pathways[f"Pathway {p:03d}"] = frozenset(genes[i] for i in members)
    names = sorted(pathways)
    contrasts = []
    for t in range(sz.dseqde_targets):
        target = f"TGT{t:03d}"
        for c in range(sz.dseqde_contexts):
            tested = frozenset(genes[i] for i in rng.choice(len(genes), size=int(0.8 * len(genes)), replace=False))
            # DEGs concentrate in a few planted pathways plus background noise
            planted = [names[i] for i in rng.choice(len(names), size=4, replace=False)]
            degs = set()
            for p in planted:
                degs |= {g for g in sorted(pathways[p]) if rng.random() < 0.7}
            degs |= {g for g in genes if rng.random() < 0.03}
            contrasts.append(
                PerturbationContrast(
                    target,
                    f"context {c:02d}",
                    MECHANISMS[int(rng.integers(len(MECHANISMS)))],
                    tested,
                    frozenset(degs) & tested,
                )
            )
    # one activator that must be filtered out
    contrasts.append(PerturbationContrast("TGT999", "context 00", "agonist", frozenset(genes), frozenset(genes[:10])))
    return contrasts, pathways


def synth_dpp(seed: int, sz: SyntheticSizes) -> tuple[list[PerturbationContext], list[GeneSet]]:
    rng = rng_for(seed, "synthetic", "DPP")
    genes = _genes("P", sz.dpp_genes)
    library = []
    for p in range(sz.dpp_pathways):
        members = rng.choice(len(genes), size=int(rng.integers(10, 40)), replace=False)
        library.append(GeneSet(f"Reactome pathway {p:03d}", frozenset(genes[i] for i in members)))
    contexts = []
    for d in range(sz.dpp_drugs):
        for c in range(sz.dpp_cell_lines):
            for conc in sz.dpp_concentrations:
                stat = rng.normal(0, 1, size=len(genes))
                # a context without any planted effect exercises the FDR gate
                if not (d == 0 and c == 0 and conc == sz.dpp_concentrations[0]):
                    for gs_idx in rng.choice(len(library), size=4, replace=False):
                        idx = [genes.index(g) for g in sorted(library[gs_idx].genes)]
                        stat[idx] += rng.choice([-1.0, 1.0]) * rng.uniform(1.0, 3.0)
                ranked = [genes[i] for i in np.argsort(stat, kind="stable")]
                res = enrichment_with_significance(ranked, library, n_perm=sz.dpp_n_perm, seed=derive_ctx_seed(seed, d, c, conc))
                contexts.append(PerturbationContext(f"Drug-{d:03d}", f"CL{c:02d}", conc, res))
    return contexts, library


def synth_ontology(seed: int, names: list[str], attach: float = 0.6) -> list[tuple[str, str]]:
    """Random forest over pathway names: each node may hang under an earlier one."""
    rng = rng_for(seed, "synthetic", "ontology")
    edges = []
    for i in range(1, len(names)):
        if rng.random() < attach:
            edges.append((names[int(rng.integers(i))], names[i]))
    return edges


def derive_ctx_seed(seed: int, *parts: object) -> int:
    return int(rng_for(seed, "synthetic", "DPP-null", *parts).integers(2**31))


def synth_ttp(seed: int, sz: SyntheticSizes) -> list[dict]:
    rng = rng_for(seed, "synthetic", "TTP")
    rows = []
    for t in range(sz.ttp_targets):
        row: dict = {"target": f"PROT{t:04d}"}
        for f in FIELDS:
            u = rng.random()
            row[f] = None if u < 0.03 else bool(u < 0.5)
        rows.append(row)
    # duplicate rows with every flag flipped create contradictory keys
    for t in range(sz.ttp_conflicting_duplicates):
        dup = dict(rows[t])
        for f in FIELDS:
            if dup[f] is not None:
                dup[f] = not dup[f]
        rows.append(dup)
    return rows


def synth_sd(seed: int, sz: SyntheticSizes) -> list[ProteinPockets]:
    rng = rng_for(seed, "synthetic", "SD")
    out = []
    for p in range(sz.sd_proteins):
        length = int(rng.integers(50, 200))
        seq = "M" + "".join(AMINO[i] for i in rng.integers(len(AMINO), size=length - 1))
        n_pockets = int(rng.integers(1, 7))
        pockets = []
        for _ in range(n_pockets):
            k = int(rng.integers(4, 20))
            res = tuple(int(r) + 1 for r in rng.choice(length, size=k, replace=False))
            pockets.append(Pocket(res, round(float(rng.random()), 3)))
        out.append(ProteinPockets(f"P{p:05d}", seq, pockets))
    return out


def synthetic_sources(seed: int = 0, scale: float = 1.0, sizes: SyntheticSizes | None = None) -> CorpusSources:
    sz = (sizes or SyntheticSizes()).scaled(scale)
    tvhe = {ind: differential_expression(m, ("tumour", "normal")) for ind, m in synth_tvhe_cohorts(seed, sz).items()}
    contrasts, pathway_map = synth_dseqde(seed, sz)
    dpp, library = synth_dpp(seed, sz)
    names = [gs.name for gs in library]
    return CorpusSources(
        spde=synth_spde(seed, sz),
        tvhe=tvhe,
        gi=synth_gi(seed, sz),
        tcgasa=synth_tcgasa(seed, sz),
        dseqde=contrasts,
        pathway_map=pathway_map,
        dpp=dpp,
        ttp=synth_ttp(seed, sz),
        sd=synth_sd(seed, sz),
        dpp_library={gs.name: gs.genes for gs in library},
        dpp_ontology=synth_ontology(seed, names),
    )
