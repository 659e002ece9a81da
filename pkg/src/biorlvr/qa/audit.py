"""Corpus key audit: re-derive every answer from the source tables.

The checks deliberately avoid the generators' own helpers where a cheap
independent route exists (numpy quantiles, direct set membership, plain
argmax over the source rows).
"""

from __future__ import annotations

import re
from collections import Counter, defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..biostats import DEResult, distance
from .items import QAError, QAItem
from .sources import CorpusSources
from .templates import TTP_BANK, validate_schema
from .ttp import field_value


@dataclass
class AuditReport:
    checked: Counter = field(default_factory=Counter)
    mismatches: list[dict[str, Any]] = field(default_factory=list)

    @property
    def n_checked(self) -> int:
        return sum(self.checked.values())

    @property
    def ok(self) -> bool:
        return not self.mismatches

    def to_dict(self) -> dict[str, Any]:
        return {"checked": dict(self.checked), "n_checked": self.n_checked, "mismatches": self.mismatches}


def _label_of(item: QAItem, pred) -> list[str]:
    return [o.label for o in item.options if pred(o.text)]


_SPDE_Q = re.compile(r"^Which gene is (upregulated|downregulated) in tumour islets versus stroma in (.+)\?$")


class _Auditor:
    def __init__(self, src: CorpusSources):
        self.src = src
        self._spde: dict[str, tuple[float, float, dict[str, float]]] | None = None
        self._tvhe = {(ind, r.gene_id): r for ind, rs in src.tvhe.items() for r in rs}
        self._gi = {(r.gene, r.indication, r.feature_type): r.truth for r in src.gi}
        self._dseq = {(c.target, c.context): c for c in src.dseqde}
        self._dpp = {c.key: c for c in src.dpp}
        self._sd = {p.protein_id: p for p in src.sd}
        self._ttp_fields = {t.extra["question_type"]: t for t in TTP_BANK}

    def spde(self, item: QAItem) -> list[str]:
        if self._spde is None:
            by_ind: dict[str, dict[str, float]] = defaultdict(dict)
            for r in self.src.spde:
                if r.s is not None and np.isfinite(r.s):
                    by_ind[r.indication].setdefault(r.gene, r.s)
            self._spde = {}
            for ind, scores in by_ind.items():
                arr = np.fromiter(scores.values(), float)
                self._spde[ind] = (float(np.quantile(arr, 0.99)), float(np.quantile(arr, 0.01)), scores)
        m = _SPDE_Q.match(item.question)
        if not m:
            raise QAError("question does not match the SPDE pattern")
        direction, ind = m.groups()
        q_hi, q_lo, scores = self._spde[ind]
        # tiny slack for float disagreement between quantile routes
        tol = 1e-12 * max(1.0, abs(q_hi), abs(q_lo))

        def in_tail(text: str) -> bool:
            s = scores[text.split(" (ensembl ")[0]]
            return s >= q_hi - tol if direction == "upregulated" else s <= q_lo + tol

        return _label_of(item, in_tail)

    def tvhe(self, item: QAItem) -> list[str]:
        r = self._tvhe[(item.subjects["indication"][0], item.subjects["gene"][0])]
        if r.fdr < 0.05 and r.log2_fc > 1:
            tumour = True
        elif r.fdr < 0.05 and r.log2_fc < -1:
            tumour = False
        else:
            raise QAError("source gene is not differentially expressed")

        def is_normal(text: str) -> bool:
            return "normal" in text or "non-neoplastic" in text

        return _label_of(item, lambda t: is_normal(t) != tumour)

    def gi(self, item: QAItem) -> list[str]:
        truth = self._gi[(item.subjects["gene"][0], item.subjects["indication"][0], item.question_type)]
        return _label_of(item, lambda t: t == ("True" if truth else "False"))

    def tcgasa(self, item: QAItem) -> list[str]:
        acts = self.src.tcgasa
        sub = item.metadata["subtype"]
        metric = item.metadata.get("metric", "wasserstein")

        def sig_name(text: str) -> str:
            return text.split(" (computed as")[0]

        if sub == "signature_expression":
            sig = item.subjects["signature"][0]
            means = {o.text: float(np.mean(acts.values[(o.text, sig)])) for o in item.options}
            return _label_of(item, lambda t: means[t] == max(means.values()))
        if sub == "signature_similarity":
            ref = item.subjects["signature"][0]
            d = {}
            for o in item.options:
                cand = sig_name(o.text)
                d[o.text] = np.mean(
                    [distance(metric, acts.values[(i, ref)], acts.values[(i, cand)]) for i in acts.indications]
                )
            return _label_of(item, lambda t: d[t] == min(d.values()))
        if sub == "cancer_similarity":
            sig, ref = item.subjects["signature"][0], item.subjects["indication"][0]
            d = {o.text: distance(metric, acts.values[(ref, sig)], acts.values[(o.text, sig)]) for o in item.options}
            return _label_of(item, lambda t: d[t] == min(d.values()))
        cancer = item.subjects["indication"][0]
        means = {o.text: float(np.mean(acts.values[(cancer, sig_name(o.text))])) for o in item.options}
        return _label_of(item, lambda t: means[t] == max(means.values()))

    def dseqde(self, item: QAItem) -> list[str]:
        c = self._dseq[(item.subjects["target"][0], item.subjects["context"][0])]
        if item.question_type == "yes_no_gene":
            hit = item.subjects["gene"][0] in c.degs
            return _label_of(item, lambda t: t == ("Yes" if hit else "No"))
        if item.question_type == "pairwise_gene":
            return _label_of(item, lambda t: t in c.degs)
        return _label_of(item, lambda t: len(self.src.pathway_map[t] & c.degs) > 0)

    def dpp(self, item: QAItem) -> list[str]:
        key = (item.subjects["drug"][0], item.subjects["cell_line"][0], item.metadata["concentration"])
        ctx = self._dpp[key]
        sig = [r for r in ctx.results if r.fdr < 0.05]
        best = sig[int(np.argmax([abs(r.nes) for r in sig]))]
        expected = f"{best.set_name} - {'upregulated' if best.score > 0 else 'downregulated'}"
        return _label_of(item, lambda t: t == expected)

    def ttp(self, item: QAItem) -> list[str]:
        row = self.src.ttp[item.metadata["data_row_index"]]
        t = self._ttp_fields[item.question_type]
        value = field_value(row, t.extra["field"])
        truth = (not value) if t.extra["negated"] else bool(value)
        return _label_of(item, lambda x: x.lower() == ("yes" if truth else "no"))

    def sd(self, item: QAItem) -> list[str]:
        prot = self._sd[item.subjects["protein"][0]]
        best = prot.pockets[int(np.argmax([p.score for p in prot.pockets]))]
        expected = " ".join(f"{prot.sequence[r - 1]}{r}" for r in best.residues)
        return _label_of(item, lambda t: t == expected)


_DISPATCH = {
    "SPDE": "spde",
    "TvHE": "tvhe",
    "GI": "gi",
    "TCGA-SA": "tcgasa",
    "DSeqDE": "dseqde",
    "DPP": "dpp",
    "TTP": "ttp",
    "SD": "sd",
}


def audit_items(items: Iterable[QAItem], sources: CorpusSources) -> AuditReport:
    """Schema-validate each item and compare its key with the re-derived one."""
    aud = _Auditor(sources)
    report = AuditReport()
    for item in items:
        report.checked[item.family] += 1
        try:
            item.validate()
            validate_schema(item)
            labels = getattr(aud, _DISPATCH[item.family])(item)
        except (QAError, KeyError, IndexError, ValueError) as exc:
            report.mismatches.append({"id": item.id, "reason": f"{type(exc).__name__}: {exc}"})
            continue
        if labels != [item.answer]:
            report.mismatches.append({"id": item.id, "reason": "key mismatch", "stored": item.answer, "derived": labels})
    return report


def count_eligible_tvhe(de: Mapping[str, Sequence[DEResult]]) -> int:
    return sum(1 for rs in de.values() for r in rs if r.fdr < 0.05 and abs(r.log2_fc) > 1)


def label_balance(items: Iterable[QAItem], key: str = "target") -> dict[str, Counter]:
    """Per-subject counts of correct option text, e.g. Yes/No per target."""
    out: dict[str, Counter] = defaultdict(Counter)
    for it in items:
        out[it.subjects[key][0]][it.correct_text] += 1
    return dict(out)
