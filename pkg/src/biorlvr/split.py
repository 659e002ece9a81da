"""Leakage-safe train/test construction.

Entity-disjoint splitting over subject roles, greedy stratum balancing,
ontology subtree partitioning and Jaccard filtering of held-out gene sets.
``verify_split`` re-checks everything from the two item lists alone.
"""

from __future__ import annotations

import graphlib
import json
import logging
from collections import Counter, defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from .qa.items import QAItem
from .seeding import rng_for

log = logging.getLogger(__name__)

TRAIN, TEST, DROP = "train", "test", "drop"


class SplitError(ValueError):
    pass


@dataclass
class SplitConfig:
    subject_roles: tuple[str, ...]
    holdout: dict[str, list[str]] | None = None
    ratio: float | None = None
    primary_role: str | None = None
    stratify_keys: tuple[str, ...] = ()
    seed: int = 0
    fixed: dict[str, dict[str, str]] = field(default_factory=dict)
    disjoint: bool = True
    tolerance: float = 0.05
    letter_tolerance: float = 0.02
    letter_min_items: int = 10_000

    def __post_init__(self) -> None:
        self.subject_roles = tuple(self.subject_roles)
        self.stratify_keys = tuple(self.stratify_keys)
        if not self.subject_roles:
            raise SplitError("subject_roles must be non-empty")
        if self.ratio is not None and not 0.0 < self.ratio < 1.0:
            raise SplitError("ratio must lie in (0, 1)")
        if self.ratio is None and not self.holdout and not self.fixed:
            raise SplitError("give a holdout list, a ratio or fixed assignments")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> SplitConfig:
        return cls(**dict(d))


@dataclass
class SplitReport:
    n_train: int = 0
    n_test: int = 0
    n_dropped: int = 0
    overlaps: dict[str, int] = field(default_factory=dict)
    overlap_examples: dict[str, list[str]] = field(default_factory=dict)
    strata: dict[str, dict[str, dict[str, float]]] = field(default_factory=dict)
    letter_balance: dict[str, dict[str, float]] = field(default_factory=dict)
    violations: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict[str, Any]:
        return {**asdict(self), "passed": self.passed}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


@dataclass
class SplitResult:
    train: list[QAItem]
    test: list[QAItem]
    report: SplitReport
    dropped: list[QAItem] = field(default_factory=list)


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------


def entities(item: QAItem, role: str) -> list[str]:
    return list(item.subjects.get(role, []))


def stratum_of(item: QAItem, keys: Sequence[str]) -> str:
    parts = []
    for k in keys:
        if k == "answer":
            v = item.answer
        elif k in ("family", "question_type"):
            v = getattr(item, k)
        elif k == "correct_text":
            v = item.correct_text
        elif k.startswith("subject:"):
            v = ",".join(entities(item, k.split(":", 1)[1])[:1])
        else:
            v = item.metadata.get(k)
        parts.append(f"{k}={v}")
    return "|".join(parts)


def _shares(items: Sequence[QAItem], keys: Sequence[str]) -> dict[str, float]:
    c = Counter(stratum_of(it, keys) for it in items)
    n = sum(c.values())
    return {s: v / n for s, v in c.items()} if n else {}


def _check_feasible(items: Sequence[QAItem], roles: Sequence[str]) -> None:
    if len(items) < 2:
        return
    for role in roles:
        counts = Counter(e for it in items for e in set(entities(it, role)))
        for e, n in sorted(counts.items()):
            if n == len(items):
                raise SplitError(f"entity {role}={e!r} occurs in every item; no disjoint split exists")


# --------------------------------------------------------------------------
# entity-disjoint split
# --------------------------------------------------------------------------


def _tentative_sides(items: Sequence[QAItem], cfg: SplitConfig, forced: dict[tuple[str, str], str]) -> list[str]:
    sides = []
    for it in items:
        tags = {forced.get((r, e)) for r in cfg.subject_roles for e in entities(it, r)}
        if DROP in tags:
            sides.append(DROP)
        elif TEST in tags:
            sides.append(TEST)
        elif TRAIN in tags:
            sides.append(TRAIN)
        else:
            sides.append("")
    if cfg.ratio is None:
        return [s or TRAIN for s in sides]
    # grow the test side by whole primary entities until the ratio is met
    role = cfg.primary_role or cfg.subject_roles[0]
    free = sorted({e for it, s in zip(items, sides) if not s for e in entities(it, role)})
    order = [free[i] for i in rng_for(cfg.seed, "split", role).permutation(len(free))]
    by_entity: dict[str, list[int]] = defaultdict(list)
    for i, it in enumerate(items):
        if not sides[i]:
            for e in entities(it, role):
                by_entity[e].append(i)
    n_live = sum(s != DROP for s in sides)
    target = cfg.ratio * n_live
    n_test = sum(s == TEST for s in sides)
    for e in order:
        if n_test >= target:
            break
        for i in by_entity[e]:
            if not sides[i]:
                sides[i] = TEST
                n_test += 1
    return [s or TRAIN for s in sides]


def _entity_sides(
    items: Sequence[QAItem], sides: Sequence[str], cfg: SplitConfig, forced: dict[tuple[str, str], str]
) -> dict[tuple[str, str], str]:
    """Each free entity joins the side where it is relatively over-represented."""
    n_tr = sum(s == TRAIN for s in sides)
    n_te = sum(s == TEST for s in sides)
    frac = n_te / (n_tr + n_te) if n_tr + n_te else 0.0
    counts: dict[tuple[str, str], list[int]] = defaultdict(lambda: [0, 0])
    for it, s in zip(items, sides):
        if s == DROP:
            continue
        for r in cfg.subject_roles:
            for e in set(entities(it, r)):
                counts[(r, e)][s == TEST] += 1
    out = dict(forced)
    for key, (tr, te) in counts.items():
        if key in out:
            continue
        # ties go to train
        out[key] = TEST if te / (tr + te) > frac and frac > 0 else TRAIN
    return out


def _balance(side_items: list[QAItem], keys: Sequence[str], target: Mapping[str, float], tol: float, rng) -> list[QAItem]:
    """Drop items from the most over-represented stratum until every share is within tol.

    Under-represented strata are repaired indirectly: trimming the others
    raises their share.
    """
    items = list(side_items)
    by = defaultdict(list)
    for i, it in enumerate(items):
        by[stratum_of(it, keys)].append(i)
    alive = {s: list(idx) for s, idx in by.items()}
    n = len(items)
    # a stratum that should be present but is absent cannot be fixed by dropping
    if any(t > tol and not alive.get(s) for s, t in target.items()):
        return items
    removed: set[int] = set()
    while n > 0:
        excess = {s: len(idx) / n - target.get(s, 0.0) for s, idx in alive.items() if idx}
        short = max((target[s] - len(alive.get(s, [])) / n for s in target), default=0.0)
        worst = max(sorted(excess), key=lambda s: excess[s])
        if excess[worst] <= tol and short <= tol:
            break
        pool = alive[worst]
        removed.add(pool.pop(int(rng.integers(len(pool)))))
        n -= 1
    return [it for i, it in enumerate(items) if i not in removed]


def entity_disjoint_split(items: Sequence[QAItem], config: SplitConfig) -> SplitResult:
    items = list(items)
    cfg = config
    for it in items:
        if not any(entities(it, r) for r in cfg.subject_roles):
            raise SplitError(f"{it.id}: carries none of the subject roles {cfg.subject_roles}")

    if not cfg.disjoint:
        return _random_split(items, cfg)

    _check_feasible(items, cfg.subject_roles)
    forced: dict[tuple[str, str], str] = {}
    for role, ents in (cfg.fixed or {}).items():
        for e, side in ents.items():
            forced[(role, e)] = side
    for role, ents in (cfg.holdout or {}).items():
        for e in ents:
            forced[(role, e)] = TEST

    sides = _tentative_sides(items, cfg, forced)
    ent_side = _entity_sides(items, sides, cfg, forced)
    train, test, dropped = [], [], []
    for it in items:
        tags = {ent_side.get((r, e), DROP) for r in cfg.subject_roles for e in entities(it, r)}
        if len(tags) == 1 and DROP not in tags:
            (train if TRAIN in tags else test).append(it)
        else:
            dropped.append(it)

    if cfg.stratify_keys:
        rng = rng_for(cfg.seed, "stratify")
        # the verifier measures against the pooled kept items, so iterate to a fixed point
        for _ in range(10):
            target = _shares(train + test, cfg.stratify_keys)
            new_train = _balance(train, cfg.stratify_keys, target, cfg.tolerance * 0.8, rng)
            new_test = _balance(test, cfg.stratify_keys, target, cfg.tolerance * 0.8, rng)
            kept = {id(x) for x in new_train + new_test}
            dropped += [x for x in train + test if id(x) not in kept]
            train, test = new_train, new_test
            if not _strata_violations(train, test, cfg):
                break

    train = [replace(it, split=TRAIN) for it in train]
    test = [replace(it, split=TEST) for it in test]
    report = verify_split(train, test, cfg)
    report.n_dropped = len(dropped)
    return SplitResult(train, test, report, dropped)


def _random_split(items: list[QAItem], cfg: SplitConfig) -> SplitResult:
    """Plain seeded random split; reproduces splits without subject constraints."""
    ratio = cfg.ratio if cfg.ratio is not None else 0.2
    order = rng_for(cfg.seed, "random-split").permutation(len(items))
    n_test = int(round(ratio * len(items)))
    test_idx = set(order[:n_test].tolist())
    train = [replace(it, split=TRAIN) for i, it in enumerate(items) if i not in test_idx]
    test = [replace(it, split=TEST) for i, it in enumerate(items) if i in test_idx]
    return SplitResult(train, test, verify_split(train, test, cfg))


# --------------------------------------------------------------------------
# verification
# --------------------------------------------------------------------------


def _strata_violations(train: Sequence[QAItem], test: Sequence[QAItem], cfg: SplitConfig) -> list[str]:
    if not cfg.stratify_keys:
        return []
    target = _shares(list(train) + list(test), cfg.stratify_keys)
    out = []
    for name, side in ((TRAIN, train), (TEST, test)):
        if not side:
            continue
        shares = _shares(side, cfg.stratify_keys)
        for s, t in sorted(target.items()):
            dev = shares.get(s, 0.0) - t
            if abs(dev) > cfg.tolerance + 1e-12:
                out.append(f"{name}: stratum {s} share {shares.get(s, 0.0):.4f} vs corpus {t:.4f}")
    return out


def verify_split(train: Sequence[QAItem], test: Sequence[QAItem], config: SplitConfig) -> SplitReport:
    """Independent audit of a split: overlaps, strata, answer letters."""
    cfg = config
    rep = SplitReport(n_train=len(train), n_test=len(test))
    for role in cfg.subject_roles:
        a = {e for it in train for e in entities(it, role)}
        b = {e for it in test for e in entities(it, role)}
        shared = sorted(a & b)
        rep.overlaps[role] = len(shared)
        if shared:
            rep.overlap_examples[role] = shared[:10]
            if cfg.disjoint:
                rep.violations.append(f"role {role}: {len(shared)} entities shared across splits")
    if not train or not test:
        rep.violations.append("empty split side")

    if cfg.stratify_keys:
        target = _shares(list(train) + list(test), cfg.stratify_keys)
        for name, side in ((TRAIN, train), (TEST, test)):
            shares = _shares(side, cfg.stratify_keys)
            rep.strata[name] = {s: {"share": shares.get(s, 0.0), "target": t} for s, t in sorted(target.items())}
        rep.violations += _strata_violations(train, test, cfg)

    for name, side in ((TRAIN, train), (TEST, test)):
        if not side:
            continue
        letters = Counter(it.answer for it in side)
        rep.letter_balance[name] = {k: v / len(side) for k, v in sorted(letters.items())}
        if len(side) >= cfg.letter_min_items:
            expected = float(np.mean([1.0 / len(it.options) for it in side]))
            share_a = letters.get("A", 0) / len(side)
            if abs(share_a - expected) > cfg.letter_tolerance:
                rep.violations.append(f"{name}: answer-letter A share {share_a:.4f} vs expected {expected:.4f}")
    return rep


# --------------------------------------------------------------------------
# ontology partitioning and Jaccard filtering
# --------------------------------------------------------------------------


@dataclass
class OntologyGraph:
    nodes: dict[str, frozenset[str]]
    edges: list[tuple[str, str]]

    def validate(self) -> None:
        for p, c in self.edges:
            if p not in self.nodes or c not in self.nodes:
                raise SplitError(f"edge {p}->{c} references an unknown node")
        ts = graphlib.TopologicalSorter({n: set() for n in self.nodes})
        for p, c in self.edges:
            ts.add(c, p)
        try:
            tuple(ts.static_order())
        except graphlib.CycleError as exc:
            raise SplitError(f"ontology contains a cycle: {exc.args[1]}") from None

    def children(self) -> dict[str, list[str]]:
        ch: dict[str, list[str]] = defaultdict(list)
        for p, c in self.edges:
            ch[p].append(c)
        return ch

    def roots(self) -> list[str]:
        has_parent = {c for _, c in self.edges}
        return sorted(n for n in self.nodes if n not in has_parent)


def read_ontology(relations_path: str | Path, gene_sets: Mapping[str, Iterable[str]] | None = None) -> OntologyGraph:
    """Two-column parent,child file (tab or comma separated)."""
    edges = []
    for line in Path(relations_path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t") if "\t" in line else line.split(",")
        if len(parts) != 2:
            raise SplitError(f"bad relation line: {line!r}")
        edges.append((parts[0].strip(), parts[1].strip()))
    nodes = {k: frozenset(v) for k, v in (gene_sets or {}).items()}
    for p, c in edges:
        nodes.setdefault(p, frozenset())
        nodes.setdefault(c, frozenset())
    return OntologyGraph(nodes, edges)


def ontology_subtrees(graph: OntologyGraph) -> list[tuple[str, list[str]]]:
    """(root, members) in assignment order; shared descendants stay with the first root."""
    graph.validate()
    ch = graph.children()

    def descendants(root: str) -> list[str]:
        seen, stack = {root}, [root]
        while stack:
            for c in ch.get(stack.pop(), []):
                if c not in seen:
                    seen.add(c)
                    stack.append(c)
        return sorted(seen)

    full = {r: descendants(r) for r in graph.roots()}
    order = sorted(full, key=lambda r: (-len(full[r]), r))
    taken: set[str] = set()
    out = []
    for r in order:
        members = [n for n in full[r] if n not in taken]
        taken.update(members)
        out.append((r, members))
    return out


def partition_ontology(graph: OntologyGraph) -> dict[str, str]:
    """Subtrees by size descending (ties by root id), alternately train/test."""
    assignment: dict[str, str] = {}
    for k, (_, members) in enumerate(ontology_subtrees(graph)):
        side = TRAIN if k % 2 == 0 else TEST
        for n in members:
            assignment[n] = side
    return assignment


def jaccard(a: frozenset[str] | set[str], b: frozenset[str] | set[str]) -> float:
    union = len(a | b)
    return len(a & b) / union if union else 0.0


def max_jaccard_filter(
    test_sets: Mapping[str, Iterable[str]],
    train_sets: Mapping[str, Iterable[str]],
    threshold: float = 0.3,
) -> list[str]:
    """Names of test sets whose max Jaccard against every train set is <= threshold."""
    if not 0.0 <= threshold <= 1.0:
        raise SplitError("threshold must lie in [0, 1]")
    tr = {k: frozenset(v) for k, v in train_sets.items()}
    te = {k: frozenset(v) for k, v in test_sets.items()}
    for name, s in list(tr.items()) + list(te.items()):
        if not s:
            raise SplitError(f"gene set {name!r} is empty")
    keep = []
    for name in sorted(te):
        best = max((jaccard(te[name], s) for s in tr.values()), default=0.0)
        if best <= threshold:
            keep.append(name)
    return keep


def pathway_assignment(graph: OntologyGraph, threshold: float = 0.3) -> dict[str, str]:
    """Ontology partition with leaky test pathways marked for dropping.

    Nodes without gene sets cannot be scored and are kept on their side.
    """
    part = partition_ontology(graph)
    train = {n: graph.nodes[n] for n, s in part.items() if s == TRAIN and graph.nodes[n]}
    test = {n: graph.nodes[n] for n, s in part.items() if s == TEST and graph.nodes[n]}
    keep = set(max_jaccard_filter(test, train, threshold)) if train and test else set(test)
    return {n: (DROP if s == TEST and n in test and n not in keep else s) for n, s in part.items()}
