"""Question template banks for every family.

A template is a ``str.format`` pattern. Items record the template id and the
slot values they were rendered with, which is what schema validation
re-renders and compares against.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field
from typing import Any

from .items import QAError, QAItem


@dataclass(frozen=True)
class Template:
    id: str
    pattern: str
    tags: frozenset[str] = frozenset()
    extra: dict[str, Any] = field(default_factory=dict, hash=False, compare=False)

    @property
    def slots(self) -> set[str]:
        return {name for _, name, _, _ in string.Formatter().parse(self.pattern) if name}

    def render(self, **slots: str) -> str:
        missing = self.slots - slots.keys()
        if missing:
            raise QAError(f"template {self.id}: missing slots {sorted(missing)}")
        return self.pattern.format(**slots)


@dataclass
class TemplateBank:
    family: str
    templates: dict[str, Template]

    def __getitem__(self, template_id: str) -> Template:
        return self.templates[template_id]

    def __contains__(self, template_id: str) -> bool:
        return template_id in self.templates

    def __iter__(self):
        return iter(self.templates.values())

    def with_tag(self, tag: str) -> list[Template]:
        return [t for t in self.templates.values() if tag in t.tags]


def _bank(family: str, templates: list[Template]) -> TemplateBank:
    return TemplateBank(family, {t.id: t for t in templates})


# -- SPDE ---------------------------------------------------------------------

SPDE_BANK = _bank(
    "SPDE",
    [Template("spde", "Which gene is {direction} in tumour islets versus stroma in {indication}?")],
)

# -- TvHE ---------------------------------------------------------------------

TVHE_ABUNDANCE = (
    "transcript abundance",
    "mRNA levels",
    "mRNA abundance",
    "transcriptional abundance",
    "expression levels",
)
TVHE_TUMOUR_TERMS = ("neoplastic tissue", "tumour tissue", "neoplastic cells")
TVHE_NORMAL_TERMS = ("non-neoplastic tissue", "adjacent normal tissue")

TVHE_BANK = _bank(
    "TvHE",
    [
        Template(
            "tvhe.direct",
            "Is {gene} more expressed in {indication} {tumour_term} or in {indication} {normal_term}?",
            frozenset({"direct"}),
            {"option_style": "short"},
        ),
        Template(
            "tvhe.direct_flipped",
            "Is {gene} more expressed in {indication} {normal_term} or in {indication} {tumour_term}?",
            frozenset({"direct", "flipped"}),
            {"option_style": "short"},
        ),
        Template(
            "tvhe.descriptive",
            "Does {gene} exhibit higher {abundance} in {indication} {tumour_term} "
            "compared to the corresponding {normal_term}?",
            frozenset({"descriptive"}),
            {"option_style": "short"},
        ),
        Template(
            "tvhe.descriptive_matched",
            "Does {gene} exhibit higher {abundance} in {indication} {tumour_term} compared to matched {normal_term}?",
            frozenset({"descriptive"}),
            {"option_style": "short"},
        ),
        Template(
            "tvhe.descriptive_context",
            "In {indication}, does {gene} exhibit higher {abundance} in the {tumour_term} "
            "compared to the corresponding {normal_term}?",
            frozenset({"descriptive"}),
            {"option_style": "short"},
        ),
        Template(
            "tvhe.descriptive_flipped",
            "In {indication}, does {gene} exhibit higher {abundance} in the {normal_term} "
            "compared to the {tumour_term}?",
            frozenset({"descriptive", "flipped"}),
            {"option_style": "short"},
        ),
        Template(
            "tvhe.elevated",
            "In {indication}, does {gene} exhibit elevated {abundance} in the {tumour_term} "
            "compared to the surrounding {normal_term}?",
            frozenset({"descriptive"}),
            {"option_style": "short"},
        ),
        Template(
            "tvhe.selection",
            "In the context of {indication}, which tissue type exhibits a higher level of {gene} {abundance}?",
            frozenset({"selection"}),
            {"option_style": "indication"},
        ),
        Template(
            "tvhe.selection_flipped",
            "In {indication}, which shows higher {abundance} of {gene}: the {normal_term} or the {tumour_term}?",
            frozenset({"selection", "flipped"}),
            {"option_style": "indication"},
        ),
    ],
)

# -- GI -----------------------------------------------------------------------

GI_ABUNDANCE = ("transcript abundance", "mRNA abundance", "gene expression level")

_ELEVATED = "Is the {abundance} of {gene} significantly elevated in "

# feature type -> (base wording, technical rephrasings)
GI_FEATURES: dict[str, tuple[str, tuple[str, ...]]] = {
    "high_expression": (
        "Does {gene} in {indication} have a high expression?",
        ("Does {gene} show a significantly elevated {abundance} in {indication}?",),
    ),
    "high_expression_cancer_cells": (
        "Does {gene} in {indication} have a high expression in cancer cells?",
        (_ELEVATED + "cancer cells of {indication}?",),
    ),
    "high_expression_cancer_cells_endocytosis": (
        "Does {gene} in {indication} have a high expression in cancer cells that also have a high endocytosis signature?",
        (_ELEVATED + "{indication} cancer cells that also display a high endocytosis signature?",),
    ),
    "high_expression_malignant_cathepsin": (
        "Does {gene} in {indication} have a high expression in malignant cells from tumours that also have a high cathepsin signature?",
        (_ELEVATED + "malignant cells from {indication} tumours carrying a high cathepsin signature?",),
    ),
    "high_expression_cathepsin_tumours": (
        "Does {gene} in {indication} have a high expression in tumours that also have a high cathepsin signature?",
        (_ELEVATED + "{indication} tumours that also show a high cathepsin signature?",),
    ),
    "pseudobulk_high_proportion": (
        "Does {gene} in {indication} have a high proportion of malignant cell pseudobulks with high expression?",
        ("Do malignant cell pseudobulks in {indication} frequently show significantly elevated {abundance} of {gene}?",),
    ),
    "malignant_cells_expressing": (
        "Does {gene} in {indication} have a high proportion of malignant cells expressing it?",
        ("Is {gene} expressed by a substantial proportion of malignant cells in {indication}?",),
    ),
    "cnv_frequency": (
        "Does {gene} in {indication} have a high proportion of patients with copy number alterations for this gene?",
        (
            "Is the frequency of copy number variations (CNVs) affecting the {gene} gene significantly elevated in {indication} patients?",
            "Is the frequency of copy number variations (CNVs) affecting the {gene} gene elevated in {indication} patients?",
            "Is the frequency of copy number variations in the {gene} gene significantly elevated in {indication} patient samples?",
        ),
    ),
    "tumours_high_expression": (
        "Does {gene} in {indication} have a high proportion of tumours with high expression within at least one cancer indication?",
        ("Does a high proportion of {indication} tumours show significantly elevated {abundance} of {gene}?",),
    ),
    "quasi_h_pseudobulk": (
        "Does {gene} in {indication} have a high Quasi H score in the pseudobulk of malignant cells?",
        ("Does {gene} reach a high Quasi H score in the malignant-cell pseudobulk of {indication}?",),
    ),
    "spatial_autocorrelation": (
        "Does {gene} in {indication} have a high spatial autocorrelation of expression?",
        ("Does {gene} display significant spatial autocorrelation of its expression in {indication}?",),
    ),
    "tumour_quasi_h": (
        "Does {gene} in {indication} have a high tumour quasi H score?",
        ("Does {gene} reach a high tumour Quasi H score in {indication}?",),
    ),
    "cancer_vs_other_cells": (
        "Does {gene} in {indication} have a higher expression in cancer cells versus all other cells in the tumour?",
        (_ELEVATED + "cancer cells compared to all other cells within {indication} tumours?",),
    ),
    "tumour_vs_adjacent_normal": (
        "Does {gene} in {indication} have a higher expression in tumour versus tumour adjacent normal tissue?",
        (_ELEVATED + "{indication} tumour tissue compared to tumour-adjacent normal tissue?",),
    ),
    "tumour_core_vs_edge": (
        "Does {gene} in {indication} have a higher expression in tumour core versus tumour edge in spatial data?",
        (_ELEVATED + "the tumour core relative to the tumour edge in {indication} spatial data?",),
    ),
    "tumour_vs_blood": (
        "Does {gene} in {indication} have a higher expression in tumour versus blood?",
        (_ELEVATED + "{indication} tumour tissue compared to normal blood?",),
    ),
    "tumour_vs_bone_marrow": (
        "Does {gene} in {indication} have a higher expression in tumour versus bone marrow?",
        (_ELEVATED + "{indication} tumour tissue compared to normal bone marrow?",),
    ),
    "tumour_vs_healthy_tissues": (
        "Does {gene} in {indication} have a higher expression in tumour versus healthy tissues?",
        (_ELEVATED + "{indication} tumour tissue compared to healthy tissues?",),
    ),
    "tumour_vs_heart": (
        "Does {gene} in {indication} have a higher expression in tumour versus heart?",
        (_ELEVATED + "{indication} tumour tissue compared to normal heart tissue?",),
    ),
    "tumour_vs_kidney": (
        "Does {gene} in {indication} have a higher expression in tumour versus kidney?",
        (_ELEVATED + "{indication} tumour tissue compared to normal kidney tissue?",),
    ),
    "tumour_vs_liver": (
        "Does {gene} in {indication} have a higher expression in tumour versus liver?",
        (_ELEVATED + "{indication} tumour tissue compared to normal liver tissue?",),
    ),
    "tumour_vs_spleen": (
        "Does {gene} in {indication} have a higher expression in tumour versus spleen?",
        (_ELEVATED + "{indication} tumour tissue compared to normal spleen tissue?",),
    ),
    "tumour_vs_stroma_spatial": (
        "Does {gene} in {indication} have a higher expression in tumour versus stroma in spatial data?",
        (_ELEVATED + "{indication} tumour regions compared to stroma in spatial data?",),
    ),
    "malignant_vs_immune_proportion": (
        "Does {gene} in {indication} have a higher proportion of malignant cells than of immune cells expressing it?",
        ("Is the fraction of malignant cells expressing {gene} greater than the fraction of immune cells expressing it in {indication}?",),
    ),
    "malignant_vs_stromal_proportion": (
        "Does {gene} in {indication} have a higher proportion of malignant cells than of stromal cells expressing it?",
        ("Is the fraction of malignant cells expressing {gene} greater than the fraction of stromal cells expressing it in {indication}?",),
    ),
    "low_heterogeneity": (
        "Does {gene} in {indication} have a low level of heterogeneity in expression levels between malignant cell subclusters?",
        ("Does {gene} show minimal variability in expression levels across malignant subpopulations in {indication}?",),
    ),
    "cathepsin_spatial_association": (
        "Does {gene} in {indication} have a positive spatial association with cathepsin signature?",
        ("Is {gene} positively spatially associated with the cathepsin signature in {indication}?",),
    ),
    "endocytosis_spatial_association": (
        "Does {gene} in {indication} have a positive spatial association with endocytosis signature?",
        ("Is {gene} positively spatially associated with the endocytosis signature in {indication}?",),
    ),
    "spatial_neighbourhood": (
        "Does {gene} in {indication} have a spatial expression distribution so that malignant spots not expressing the gene are close neighbors of malignant spots expressing the gene (rather than far away)?",
        ("In {indication}, do malignant spots lacking {gene} expression lie close to malignant spots expressing {gene} rather than far away?",),
    ),
    "homogeneous_spatial_expression": (
        "Does {gene} in {indication} have a homogeneous and stable spatial expression?",
        ("Does {gene} display a homogeneous and stable spatial expression pattern in {indication}?",),
    ),
}

GI_BANK = _bank(
    "GI",
    [
        Template(f"gi.{feature}.{k}", pattern, frozenset({"rephrased"}), {"feature_type": feature})
        for feature, (_, variants) in GI_FEATURES.items()
        for k, pattern in enumerate(variants)
    ],
)

# -- TCGA-SA ------------------------------------------------------------------

TCGASA_BANK = _bank(
    "TCGA-SA",
    [
        Template(
            "tcgasa.signature_expression",
            "Which cancer type has higher expression of the {signature} (computed as the average activity of: {snippet}) signature?",
        ),
        Template(
            "tcgasa.signature_similarity",
            "Which signature has a more similar distribution to {signature} (computed as the average activity of: {snippet}) across all cancer types?",
        ),
        Template(
            "tcgasa.cancer_similarity",
            "Based on {signature} (computed as the average activity of: {snippet}) signature activity patterns "
            "from bulk RNA-seq data, which cancer type is more similar to {reference}?",
        ),
        Template("tcgasa.cancer_signature_comparison", "In {cancer}, which signature has higher expression?"),
    ],
)

# -- DSeqDE -------------------------------------------------------------------

DSEQDE_BANK = _bank(
    "DSeqDE",
    [
        Template(
            "dseqde.yes_no_gene",
            "Would a drug inhibiting the activity of the target {target} induce a deregulation of gene {gene} in {context} cells?",
        ),
        Template(
            "dseqde.pairwise_gene",
            "Which of these two genes would be deregulated by a drug inhibiting the activity of the target {target} in {context} cells?",
        ),
        Template(
            "dseqde.pairwise_pathway",
            "Which of these two pathways would be deregulated by a drug inhibiting the activity of the target {target} in {context} cells?",
        ),
    ],
)

# -- DPP ----------------------------------------------------------------------

DPP_BANK = _bank(
    "DPP",
    [
        Template(
            "dpp",
            "Which Reactome gene set would be most significantly affected by {drug} at {concentration} µM "
            "in {cell_line} cells, and in which direction: upregulation or downregulation?",
        )
    ],
)

# -- TTP ----------------------------------------------------------------------

# (question_type, pattern, annotation field, negated)
_TTP_ROWS: list[tuple[str, str, str, bool]] = [
    ("multiple_choice", "Can {target} be targeted by a small molecule?", "decision_sm", False),
    ("small_molecule", "Is {target} suitable for small molecule development?", "decision_sm", False),
    ("small_molecule_alt", "Could {target} be modulated with a small-molecule compound?", "decision_sm", False),
    ("small_molecule_negative", "Is {target} unsuitable for small molecule development?", "decision_sm", True),
    ("antibody", "Can {target} be targeted by antibodies?", "decision_ab", False),
    ("antibody_alt", "Is it true that {target} is druggable with monoclonal antibodies?", "decision_ab", False),
    ("antibody_negative", "Is {target} inaccessible to antibody-based therapeutics?", "decision_ab", True),
    ("druggability", "Is {target} druggable?", "druggable", False),
    ("druggability_alt", "Would {target} be considered a tractable drug target?", "druggable", False),
    ("druggability_negative", "Is {target} undruggable?", "druggable", True),
    ("structure", "Has {target} been structurally characterized?", "structure", False),
    ("structure_alt", "Is an experimentally determined structure available for {target}?", "structure", False),
    ("structure_negative", "Does {target} lack structural characterization?", "structure", True),
    ("ligand", "Does {target} have a known ligand?", "ligand", False),
    ("ligand_alt", "Has a ligand been reported for {target}?", "ligand", False),
    ("ligand_negative", "Is {target} devoid of any known ligand?", "ligand", True),
    ("toxicity", "Is {target} linked to toxicity issues?", "toxicity", False),
    ("toxicity_alt", "Are safety concerns associated with modulating {target}?", "toxicity", False),
    ("toxicity_negative", "Is {target} free of known toxicity issues?", "toxicity", True),
    ("inflammatory_immunological", "Is {target} involved in inflammatory diseases?", "inflammatory_immunological", False),
    (
        "inflammatory_immunological_alt",
        "Does {target} play a role in inflammatory or immunological conditions?",
        "inflammatory_immunological",
        False,
    ),
    (
        "inflammatory_immunological_negative",
        "Is {target} unrelated to inflammatory or immunological diseases?",
        "inflammatory_immunological",
        True,
    ),
    ("cancer_biology", "Is {target} associated with cancer pathways?", "cancer_biology", False),
    ("cancer_biology_alt", "Does {target} contribute to cancer biology?", "cancer_biology", False),
    ("cancer_biology_negative", "Is {target} unrelated to cancer pathways?", "cancer_biology", True),
    ("general", "Is there an established therapeutic modality for targeting {target}?", "any_modality", False),
    ("general_alt", "Can {target} be addressed by either a small molecule or an antibody?", "any_modality", False),
    ("general_negative", "Is {target} intractable to both small molecules and antibodies?", "any_modality", True),
]


def _ttp_tags(qtype: str) -> frozenset[str]:
    if qtype.endswith("_alt"):
        return frozenset({"alt"})
    if qtype.endswith("_negative"):
        return frozenset({"negative"})
    return frozenset()


TTP_BANK = _bank(
    "TTP",
    [
        Template(
            f"ttp.{qtype}",
            pattern,
            _ttp_tags(qtype),
            {
                "question_type": qtype,
                "field": fld,
                "negated": neg,
                "yes_no": ("yes", "no") if qtype == "multiple_choice" else ("Yes", "No"),
            },
        )
        for qtype, pattern, fld, neg in _TTP_ROWS
    ],
)

# -- SD -----------------------------------------------------------------------

SD_BANK = _bank(
    "SD",
    [
        Template(
            "sd",
            "Given the protein with amino-acid sequence {sequence}, which one of these two binding sites "
            "(specified by the corresponding amino-acids from the original sequence) has the highest druggability score?",
        )
    ],
)

BANKS: dict[str, TemplateBank] = {
    "SPDE": SPDE_BANK,
    "TvHE": TVHE_BANK,
    "GI": GI_BANK,
    "TCGA-SA": TCGASA_BANK,
    "DSeqDE": DSEQDE_BANK,
    "DPP": DPP_BANK,
    "TTP": TTP_BANK,
    "SD": SD_BANK,
}


def validate_schema(item: QAItem) -> None:
    """Re-render the item's template from its recorded slots and compare."""
    bank = BANKS.get(item.family)
    if bank is None:
        raise QAError(f"{item.id}: no template bank for family {item.family!r}")
    template_id = item.metadata.get("template")
    if template_id not in bank:
        raise QAError(f"{item.id}: unknown template {template_id!r}")
    rendered = bank[template_id].render(**item.metadata.get("slots", {}))
    if rendered != item.question:
        raise QAError(f"{item.id}: question text does not match template {template_id}")
