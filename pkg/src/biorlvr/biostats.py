"""Statistical core: rank tests, FDR control, fold changes, ssGSEA scores,
permutation-normalised enrichment, quantiles and 1-D distribution distances.
"""

from __future__ import annotations

import csv
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import pdist
from scipy.stats import rankdata

from .seeding import derive_seed

__all__ = [
    "StatsError",
    "ExpressionMatrix",
    "DEResult",
    "DEThresholds",
    "GeneSet",
    "EnrichmentResult",
    "wilcoxon_rank_sum",
    "bh_fdr",
    "log2_fold_change",
    "classify_de",
    "differential_expression",
    "read_expression_matrix",
    "ssgsea_score",
    "sample_activity",
    "enrichment_with_significance",
    "quantile",
    "wasserstein_1d",
    "mmd_rbf",
]

EXACT_CUTOFF = 12
LOG2FC_CLAMP = 30.0


class StatsError(ValueError):
    """Raised when an input violates an operation's precondition."""


# --------------------------------------------------------------------------
# Types
# --------------------------------------------------------------------------


@dataclass
class ExpressionMatrix:
    values: np.ndarray  # samples x genes
    sample_labels: list[str]
    gene_ids: list[str]
    sample_ids: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise StatsError("expression values must be a samples x genes matrix")
        n_samples, n_genes = self.values.shape
        if len(self.sample_labels) != n_samples:
            raise StatsError("one group label is required per sample")
        if len(self.gene_ids) != n_genes:
            raise StatsError("one gene id is required per column")
        if len(set(self.gene_ids)) != n_genes:
            raise StatsError("gene ids must be unique")
        if np.isnan(self.values).any():
            raise StatsError("expression matrix contains missing values")
        if not self.sample_ids:
            self.sample_ids = [f"S{i}" for i in range(n_samples)]

    def group(self, tag: str) -> np.ndarray:
        mask = np.array([label == tag for label in self.sample_labels])
        if not mask.any():
            raise StatsError(f"group {tag!r} has no samples")
        return self.values[mask]

    def group_size(self, tag: str) -> int:
        return sum(label == tag for label in self.sample_labels)


@dataclass(frozen=True)
class DEThresholds:
    fdr: float = 0.05
    log2_fc: float = 1.0
    min_reference_samples: int = 2


@dataclass(frozen=True)
class DEResult:
    gene_id: str
    log2_fc: float
    p_value: float
    fdr: float
    de_class: str  # tumour_up | normal_up | excluded

    def to_dict(self) -> dict:
        return {
            "gene_id": self.gene_id,
            "log2_fc": self.log2_fc,
            "p_value": self.p_value,
            "fdr": self.fdr,
            "class": self.de_class,
        }


@dataclass(frozen=True)
class GeneSet:
    name: str
    genes: frozenset[str]
    provenance: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "genes", frozenset(self.genes))
        if not self.genes:
            raise StatsError(f"gene set {self.name!r} is empty")

    def __len__(self) -> int:
        return len(self.genes)


@dataclass(frozen=True)
class EnrichmentResult:
    set_name: str
    score: float
    nes: float
    p_value: float
    fdr: float
    direction: str  # upregulated | downregulated

    def to_dict(self) -> dict:
        return {
            "set_name": self.set_name,
            "score": self.score,
            "nes": self.nes,
            "p_value": self.p_value,
            "fdr": self.fdr,
            "direction": self.direction,
        }


# --------------------------------------------------------------------------
# Rank tests and multiple testing
# --------------------------------------------------------------------------


def _exact_two_sided(doubled_ranks: np.ndarray, n1: int, observed: int) -> float:
    """Two-sided exact p from the null distribution of the doubled rank sum.

    Subset-sum counting over (size, sum) replaces enumeration; doubled
    midranks keep every quantity integral so tie handling is exact.
    """
    n = len(doubled_ranks)
    max_sum = int(doubled_ranks.sum())
    counts = np.zeros((n1 + 1, max_sum + 1), dtype=np.int64)
    counts[0, 0] = 1
    for r in doubled_ranks.astype(int):
        # iterate sizes downward so each rank is used at most once
        for k in range(min(n1, n) - 1, -1, -1):
            counts[k + 1, r:] += counts[k, : max_sum + 1 - r]
    dist = counts[n1]
    expected = n1 * (n + 1)  # doubled mean rank sum
    dev = abs(observed - expected)
    sums = np.arange(max_sum + 1)
    extreme = dist[np.abs(sums - expected) >= dev].sum()
    return float(extreme) / float(dist.sum())


def wilcoxon_rank_sum(
    a: Sequence[float], b: Sequence[float], exact_cutoff: int = EXACT_CUTOFF
) -> dict[str, float]:
    """Wilcoxon rank-sum (Mann-Whitney) test with midranks for ties.

    Exact permutation distribution when ``len(a) + len(b) <= exact_cutoff``;
    otherwise a normal approximation with tie and continuity correction.
    Returns the U statistic of ``a`` and the two-sided p-value.
    """
    x = np.asarray(a, dtype=float)
    y = np.asarray(b, dtype=float)
    if x.size == 0 or y.size == 0:
        raise StatsError("wilcoxon_rank_sum needs at least one value per group")
    n1, n2 = x.size, y.size
    n = n1 + n2
    ranks = rankdata(np.concatenate([x, y]))
    rank_sum = float(ranks[:n1].sum())
    u = rank_sum - n1 * (n1 + 1) / 2.0

    if n <= exact_cutoff:
        doubled = np.rint(2 * ranks).astype(int)
        p = _exact_two_sided(doubled, n1, int(doubled[:n1].sum()))
    else:
        _, tie_counts = np.unique(ranks, return_counts=True)
        tie_term = float((tie_counts**3 - tie_counts).sum())
        var = n1 * n2 / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
        if var <= 0:
            p = 1.0
        else:
            z = (abs(u - n1 * n2 / 2.0) - 0.5) / math.sqrt(var)
            p = math.erfc(max(z, 0.0) / math.sqrt(2.0))
    return {"u_statistic": u, "p_two_sided": min(max(p, 0.0), 1.0)}


def bh_fdr(p_values: Sequence[float]) -> np.ndarray:
    """Benjamini-Hochberg step-up adjusted values, aligned to the input."""
    p = np.asarray(p_values, dtype=float)
    if p.ndim != 1:
        raise StatsError("p-values must be one-dimensional")
    if p.size == 0:
        return p.copy()
    if np.isnan(p).any() or (p < 0).any() or (p > 1).any():
        raise StatsError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="mergesort")
    scaled = p[order] * m / np.arange(1, m + 1)
    q_sorted = np.minimum.accumulate(scaled[::-1])[::-1]
    q = np.empty(m)
    q[order] = np.minimum(q_sorted, 1.0)
    return q


def log2_fold_change(
    a_values: Sequence[float], b_values: Sequence[float], pseudocount: float = 1e-9
) -> float:
    a = np.asarray(a_values, dtype=float)
    b = np.asarray(b_values, dtype=float)
    if a.size == 0 or b.size == 0:
        raise StatsError("log2_fold_change needs non-empty groups")
    if pseudocount <= 0:
        raise StatsError("pseudocount must be positive")
    lfc = math.log2((a.mean() + pseudocount) / (b.mean() + pseudocount))
    return min(max(lfc, -LOG2FC_CLAMP), LOG2FC_CLAMP)


def classify_de(fdr: float, log2_fc: float, thresholds: DEThresholds = DEThresholds()) -> str:
    if fdr < thresholds.fdr and log2_fc > thresholds.log2_fc:
        return "tumour_up"
    if fdr < thresholds.fdr and log2_fc < -thresholds.log2_fc:
        return "normal_up"
    return "excluded"


def differential_expression(
    matrix: ExpressionMatrix,
    contrast: tuple[str, str],
    thresholds: DEThresholds = DEThresholds(),
) -> list[DEResult]:
    """Per-gene Wilcoxon test, BH across genes, and log2FC of group means.

    ``contrast`` is (case group, reference group), e.g. ("tumour", "normal").
    """
    case_tag, ref_tag = contrast
    case = matrix.group(case_tag)
    ref = matrix.group(ref_tag)
    if ref.shape[0] < thresholds.min_reference_samples:
        raise StatsError(
            f"reference group {ref_tag!r} has {ref.shape[0]} samples; "
            f"at least {thresholds.min_reference_samples} required"
        )
    pvals = []
    lfcs = []
    for j in range(len(matrix.gene_ids)):
        pvals.append(wilcoxon_rank_sum(case[:, j], ref[:, j])["p_two_sided"])
        lfcs.append(log2_fold_change(case[:, j], ref[:, j]))
    fdrs = bh_fdr(pvals)
    return [
        DEResult(g, lfc, p, float(q), classify_de(float(q), lfc, thresholds))
        for g, lfc, p, q in zip(matrix.gene_ids, lfcs, pvals, fdrs)
    ]


def read_expression_matrix(path: str | Path, delimiter: str = "\t") -> ExpressionMatrix:
    """Read sample rows: sample id, group tag, then one value per gene."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        header = next(reader)
        gene_ids = header[2:]
        sample_ids, labels, rows = [], [], []
        for row in reader:
            if not row:
                continue
            sample_ids.append(row[0])
            labels.append(row[1])
            rows.append([float(v) for v in row[2:]])
    return ExpressionMatrix(np.array(rows), labels, gene_ids, sample_ids)


# --------------------------------------------------------------------------
# Enrichment
# --------------------------------------------------------------------------


def ssgsea_score(ranked_genes: Sequence[str], gene_set: GeneSet | Iterable[str]) -> float:
    """Mean rank of set members minus mean rank of the remaining genes.

    ``ranked_genes[0]`` carries rank 1.
    """
    members = gene_set.genes if isinstance(gene_set, GeneSet) else set(gene_set)
    g = len(ranked_genes)
    in_set = np.fromiter((gene in members for gene in ranked_genes), dtype=bool, count=g)
    k = int(in_set.sum())
    if k == 0 or k == g:
        raise StatsError("gene set must cover some but not all ranked genes")
    ranks = np.arange(1, g + 1, dtype=float)
    return float(ranks[in_set].mean() - ranks[~in_set].mean())


def sample_activity(values: np.ndarray, gene_ids: Sequence[str], gene_set: GeneSet) -> np.ndarray:
    """ssGSEA activity per sample of a samples x genes matrix.

    Genes are ranked ascending by expression within each sample (midranks
    for ties), so a highly expressed set scores positive.
    """
    values = np.atleast_2d(np.asarray(values, dtype=float))
    mask = np.array([g in gene_set.genes for g in gene_ids])
    k = int(mask.sum())
    if k == 0 or k == mask.size:
        raise StatsError(f"gene set {gene_set.name!r} must cover some but not all genes")
    ranks = rankdata(values, axis=1)
    return ranks[:, mask].mean(axis=1) - ranks[:, ~mask].mean(axis=1)


def _null_scores(g: int, k: int, n_perm: int, rng: np.random.Generator) -> np.ndarray:
    draws = np.argpartition(rng.random((n_perm, g)), k - 1, axis=1)[:, :k] + 1
    set_sum = draws.sum(axis=1, dtype=float)
    total = g * (g + 1) / 2.0
    return set_sum / k - (total - set_sum) / (g - k)


def enrichment_with_significance(
    ranked_genes: Sequence[str],
    library: Sequence[GeneSet],
    n_perm: int = 1000,
    seed: int = 0,
) -> list[EnrichmentResult]:
    """Observed ssGSEA score, z-scored against same-size random gene draws.

    Each set's null uses its own generator seeded from (seed, set name), so
    results do not depend on library order.
    """
    if n_perm < 100:
        raise StatsError("n_perm must be at least 100")
    universe = set(ranked_genes)
    g = len(ranked_genes)
    scores, nes, pvals = [], [], []
    for gs in library:
        k = len(gs.genes & universe)
        if len(gs.genes) > g:
            raise StatsError(f"gene set {gs.name!r} is larger than the gene universe")
        observed = ssgsea_score(ranked_genes, gs)
        rng = np.random.default_rng(derive_seed(seed, gs.name))
        null = _null_scores(g, k, n_perm, rng)
        sd = float(null.std())
        z = 0.0 if sd == 0 else (observed - float(null.mean())) / sd
        p = (1 + int((np.abs(null) >= abs(observed)).sum())) / (n_perm + 1)
        scores.append(observed)
        nes.append(z)
        pvals.append(p)
    fdrs = bh_fdr(pvals) if pvals else np.array([])
    return [
        EnrichmentResult(
            gs.name, s, z, p, float(q), "upregulated" if s > 0 else "downregulated"
        )
        for gs, s, z, p, q in zip(library, scores, nes, pvals, fdrs)
    ]


# --------------------------------------------------------------------------
# Quantiles and distances
# --------------------------------------------------------------------------


def quantile(values: Sequence[float], p: float) -> float:
    """Type-7 quantile: linear interpolation at h = (n - 1) p."""
    if not 0.0 <= p <= 1.0:
        raise StatsError("quantile level must be in [0, 1]")
    x = np.sort(np.asarray(values, dtype=float))
    if x.size == 0:
        raise StatsError("quantile of an empty sample")
    h = (x.size - 1) * p
    lo = math.floor(h)
    hi = min(lo + 1, x.size - 1)
    return float(x[lo] + (h - lo) * (x[hi] - x[lo]))


def wasserstein_1d(a: Sequence[float], b: Sequence[float]) -> float:
    """W1 between two empirical distributions.

    Integrates |F_a^-1(u) - F_b^-1(u)| over the merged grid of probability
    breakpoints {i/n_a} U {j/n_b}; both quantile functions are constant on
    each cell of that grid.
    """
    xa = np.sort(np.asarray(a, dtype=float))
    xb = np.sort(np.asarray(b, dtype=float))
    if xa.size == 0 or xb.size == 0:
        raise StatsError("wasserstein_1d needs non-empty samples")
    na, nb = xa.size, xb.size
    grid = np.union1d(np.arange(1, na + 1) / na, np.arange(1, nb + 1) / nb)
    lower = np.concatenate([[0.0], grid[:-1]])
    mid = (lower + grid) / 2.0
    qa = xa[np.minimum((mid * na).astype(int), na - 1)]
    qb = xb[np.minimum((mid * nb).astype(int), nb - 1)]
    return float(np.sum(np.abs(qa - qb) * (grid - lower)))


def mmd_rbf(a: Sequence[float], b: Sequence[float]) -> float:
    """Biased (V-statistic) squared MMD with an RBF kernel.

    Bandwidth is the median pairwise distance of the pooled sample; a zero
    median (all points equal) falls back to bandwidth 1.
    """
    xa = np.asarray(a, dtype=float).reshape(-1, 1)
    xb = np.asarray(b, dtype=float).reshape(-1, 1)
    if xa.size == 0 or xb.size == 0:
        raise StatsError("mmd_rbf needs non-empty samples")
    pooled = np.vstack([xa, xb])
    bandwidth = float(np.median(pdist(pooled))) if pooled.shape[0] > 1 else 0.0
    if bandwidth <= 0:
        bandwidth = 1.0
    def kernel_mean(x: np.ndarray, y: np.ndarray) -> float:
        # scale before squaring: tiny bandwidths would underflow h**2
        return float(np.exp(-0.5 * ((x - y.T) / bandwidth) ** 2).mean())

    value = kernel_mean(xa, xa) + kernel_mean(xb, xb) - 2.0 * kernel_mean(xa, xb)
    return max(value, 0.0)


def distance(metric: str, a: Sequence[float], b: Sequence[float]) -> float:
    if metric == "wasserstein":
        return wasserstein_1d(a, b)
    if metric == "mmd":
        return mmd_rbf(a, b)
    raise StatsError(f"unknown distance metric {metric!r}")


def mean_distance_over(
    metric: str, pairs: Mapping[str, tuple[Sequence[float], Sequence[float]]]
) -> float:
    """Average of per-key distances, e.g. a signature pair over indications."""
    if not pairs:
        raise StatsError("no distributions to compare")
    return float(np.mean([distance(metric, a, b) for a, b in pairs.values()]))
