"""Signature-activity comparisons over bulk cohorts (TCGA-SA).

Four subtypes share one activity table: per (indication, signature) the
vector of per-sample ssGSEA activities.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from ..biostats import ExpressionMatrix, GeneSet, distance, sample_activity
from ..seeding import rng_for
from .items import Generated, make_item, shuffle_options, sorted_items
from .templates import TCGASA_BANK

SUBTYPES = (
    "signature_expression",
    "signature_similarity",
    "cancer_similarity",
    "cancer_signature_comparison",
)
QUESTION_TYPES = {
    "signature_expression": "signature_expression_binary",
    "signature_similarity": "signature_similarity_binary",
    "cancer_similarity": "cancer_similarity_binary",
    "cancer_signature_comparison": "cancer_signatures_comparison",
}


@dataclass
class TCGASAConfig:
    n_items: int = 500
    # signature_expression: |mean gap| must reach this many pooled sample SDs
    min_mean_gap_sd: float = 0.5
    # similarity subtypes: |d1 - d2| must reach this fraction of the larger distance
    min_rel_gap: float = 0.05
    # cancer_signature_comparison: size of the high and low activity tails
    tail_fraction: float = 0.25
    snippet_size: int = 10
    attempts_per_item: int = 50


@dataclass
class SignatureActivities:
    values: dict[tuple[str, str], np.ndarray]
    signatures: dict[str, GeneSet]
    _means: dict[tuple[str, str], float] = field(default_factory=dict, repr=False)

    @property
    def indications(self) -> list[str]:
        return sorted({ind for ind, _ in self.values})

    @property
    def signature_names(self) -> list[str]:
        return sorted({sig for _, sig in self.values})

    def get(self, indication: str, signature: str) -> np.ndarray:
        return self.values[(indication, signature)]

    def mean(self, indication: str, signature: str) -> float:
        key = (indication, signature)
        if key not in self._means:
            self._means[key] = float(np.mean(self.values[key]))
        return self._means[key]

    @classmethod
    def from_expression(
        cls, cohorts: Mapping[str, ExpressionMatrix], library: Sequence[GeneSet]
    ) -> SignatureActivities:
        values = {}
        for indication, m in cohorts.items():
            for gs in library:
                values[(indication, gs.name)] = sample_activity(m.values, m.gene_ids, gs)
        return cls(values, {gs.name: gs for gs in library})


def gene_snippet(gs: GeneSet, seed: int, size: int = 10) -> str:
    """Seeded sample of at most ``size`` member genes, remainder counted."""
    members = sorted(gs.genes)
    rng = rng_for(seed, "snippet", gs.name)
    k = min(size, len(members))
    shown = [members[i] for i in sorted(rng.choice(len(members), size=k, replace=False))]
    rest = len(members) - k
    text = ", ".join(shown)
    return f"{text}, and {rest} more genes" if rest else text


def signature_option(gs: GeneSet, seed: int, size: int = 10) -> str:
    return f"{gs.name} (computed as the average activity of: {gene_snippet(gs, seed, size)})"


class _Distances:
    """Memoised distances over an activity table."""

    def __init__(self, acts: SignatureActivities, metric: str):
        self.acts, self.metric = acts, metric
        self._sig: dict[frozenset, float] = {}
        self._ind: dict[tuple[str, frozenset], float] = {}

    def signatures(self, a: str, b: str) -> float:
        key = frozenset((a, b))
        if key not in self._sig:
            per = [distance(self.metric, self.acts.get(ind, a), self.acts.get(ind, b)) for ind in self.acts.indications]
            self._sig[key] = float(np.mean(per))
        return self._sig[key]

    def cancers(self, signature: str, a: str, b: str) -> float:
        key = (signature, frozenset((a, b)))
        if key not in self._ind:
            self._ind[key] = distance(self.metric, self.acts.get(a, signature), self.acts.get(b, signature))
        return self._ind[key]


def _clear_gap(d_correct: float, d_other: float, rel: float) -> bool:
    return d_other - d_correct >= rel * max(d_correct, d_other) and d_other > d_correct


def gen_tcgasa(
    acts: SignatureActivities,
    subtype: str,
    metric: str = "wasserstein",
    config: TCGASAConfig | None = None,
    seed: int = 0,
) -> Generated:
    if subtype not in SUBTYPES:
        raise ValueError(f"unknown TCGA-SA subtype {subtype!r}")
    cfg = config or TCGASAConfig()
    out = Generated()
    inds, sigs = acts.indications, acts.signature_names
    need_inds = {"signature_expression": 2, "cancer_similarity": 3}.get(subtype, 1)
    need_sigs = {"signature_similarity": 3, "cancer_signature_comparison": 2}.get(subtype, 1)
    if len(inds) < need_inds or len(sigs) < need_sigs:
        out.warn(kind="insufficient_candidates", subtype=subtype, n_indications=len(inds), n_signatures=len(sigs))
        return out

    template = TCGASA_BANK[f"tcgasa.{subtype}"]
    rng = rng_for(seed, "TCGA-SA", subtype, metric)
    dist = _Distances(acts, metric)
    snip = {s: gene_snippet(acts.signatures[s], seed, cfg.snippet_size) for s in sigs}
    opt = {s: f"{s} (computed as the average activity of: {snip[s]})" for s in sigs}
    seen: set = set()

    def pick(pool: Sequence[str], k: int) -> list[str]:
        return [pool[i] for i in rng.choice(len(pool), size=k, replace=False)]

    attempts = 0
    while len(seen) < cfg.n_items and attempts < cfg.n_items * cfg.attempts_per_item:
        attempts += 1
        if subtype == "signature_expression":
            sig = sigs[int(rng.integers(len(sigs)))]
            a, b = pick(inds, 2)
            key = (sig, frozenset((a, b)))
            if key in seen:
                continue
            ma, mb = acts.mean(a, sig), acts.mean(b, sig)
            pooled = float(np.sqrt((np.var(acts.get(a, sig)) + np.var(acts.get(b, sig))) / 2.0))
            if abs(ma - mb) < max(cfg.min_mean_gap_sd * pooled, 1e-12):
                continue
            hi, lo = (a, b) if ma > mb else (b, a)
            slots = {"signature": sig, "snippet": snip[sig]}
            correct, other = hi, lo
            subjects = {"signature": [sig], "indication": [hi, lo]}
            source = {"means": {a: ma, b: mb}}
        elif subtype == "signature_similarity":
            ref, c1, c2 = pick(sigs, 3)
            key = (ref, frozenset((c1, c2)))
            if key in seen:
                continue
            d1, d2 = dist.signatures(ref, c1), dist.signatures(ref, c2)
            near, far = (c1, c2) if d1 < d2 else (c2, c1)
            if not _clear_gap(min(d1, d2), max(d1, d2), cfg.min_rel_gap):
                continue
            slots = {"signature": ref, "snippet": snip[ref]}
            correct, other = opt[near], opt[far]
            subjects = {"signature": [ref, near, far]}
            source = {"distances": {c1: d1, c2: d2}}
        elif subtype == "cancer_similarity":
            sig = sigs[int(rng.integers(len(sigs)))]
            ref, c1, c2 = pick(inds, 3)
            key = (sig, ref, frozenset((c1, c2)))
            if key in seen:
                continue
            d1, d2 = dist.cancers(sig, ref, c1), dist.cancers(sig, ref, c2)
            near, far = (c1, c2) if d1 < d2 else (c2, c1)
            if not _clear_gap(min(d1, d2), max(d1, d2), cfg.min_rel_gap):
                continue
            slots = {"signature": sig, "snippet": snip[sig], "reference": ref}
            correct, other = near, far
            subjects = {"indication": [ref, near, far], "signature": [sig]}
            source = {"distances": {c1: d1, c2: d2}}
        else:
            cancer = inds[int(rng.integers(len(inds)))]
            ranked = sorted(sigs, key=lambda s: (-acts.mean(cancer, s), s))
            tail = max(1, int(round(cfg.tail_fraction * len(ranked))))
            if 2 * tail > len(ranked):
                tail = len(ranked) // 2
            high = ranked[int(rng.integers(tail))]
            low = ranked[len(ranked) - 1 - int(rng.integers(tail))]
            key = (cancer, high, low)
            if key in seen or acts.mean(cancer, high) <= acts.mean(cancer, low):
                continue
            slots = {"cancer": cancer}
            correct, other = opt[high], opt[low]
            subjects = {"indication": [cancer], "signature": [high, low]}
            source = {"means": {high: acts.mean(cancer, high), low: acts.mean(cancer, low)}}
        seen.add(key)
        item = make_item(
            item_id=f"tcga-sa-{subtype}-{len(seen) - 1:06d}",
            family="TCGA-SA",
            question_type=QUESTION_TYPES[subtype],
            question=template.render(**slots),
            correct=correct,
            others=[other],
            subjects=subjects,
            metadata={
                "subtype": subtype,
                "metric": metric,
                "template": template.id,
                "slots": slots,
                "source": source,
            },
        )
        out.items.append(shuffle_options(item, seed))
    if len(seen) < cfg.n_items:
        out.warn(kind="short_corpus", subtype=subtype, requested=cfg.n_items, produced=len(seen))
    out.items = sorted_items(out.items)
    return out
