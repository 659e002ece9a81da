"""Pipeline stages behind the command line: gen, split, verify, mixture,
train, score, judge and report.

Every stage reads and writes plain files in an output directory, so stages
can be rerun independently. All writes are atomic.
"""

from __future__ import annotations

import hashlib
import json
import logging
from collections import Counter, defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .io import atomic_write_text, write_table
from .judge import JudgeClient, JudgeConfig, judge_consistency, judge_preference
from .qa.audit import audit_items
from .qa.factory import FactoryConfig, generate_corpus, question_type_histogram
from .qa.items import FAMILIES, QAItem, iter_jsonl, read_items, write_jsonl
from .qa.sources import CorpusSources, read_sources, write_sources
from .qa.synthetic import synthetic_sources
from .rewards import score_completions
from .rl.policy import ToyPolicy
from .rl.toytask import make_toy_task
from .rl.trainer import (
    TrainerConfig,
    evaluate,
    save_policy,
    sample_completions,
    train,
    write_metrics,
)
from .seeding import derive_seed, rng_for
from .split import OntologyGraph, SplitConfig, entity_disjoint_split, pathway_assignment, verify_split

log = logging.getLogger(__name__)

SCHEMA_VERSION = "1"

FAMILY_NAMES = {f.lower().replace("-", ""): f for f in FAMILIES}

REQUIRED_TABLES = {
    "SPDE": ("spde.tsv",),
    "TvHE": ("tvhe_de.tsv",),
    "GI": ("gi.tsv",),
    "TCGA-SA": ("tcgasa.tsv", "signatures.tsv"),
    "DSeqDE": ("dseqde.tsv",),
    "DPP": ("dpp.tsv",),
    "TTP": ("ttp.tsv",),
    "SD": ("sd.tsv",),
}

# per-family split contracts; seeds are filled in from the master seed
DEFAULT_SPLITS: dict[str, dict[str, Any]] = {
    "SPDE": {"subject_roles": ["indication", "gene"], "ratio": 0.2, "primary_role": "indication",
             "stratify_keys": ["question_type"]},
    "TvHE": {"subject_roles": ["gene"], "ratio": 0.2, "stratify_keys": ["direction"]},
    "GI": {"subject_roles": ["gene"], "ratio": 0.2, "stratify_keys": ["question_type", "label"]},
    # TCGA-SA subtypes have different subjects, so each is its own split unit
    "TCGA-SA/signature_expression_binary": {"subject_roles": ["signature", "indication"],
                                            "holdout_fractions": {"signature": 0.3, "indication": 0.4},
                                            "stratify_keys": ["answer"]},
    "TCGA-SA/signature_similarity_binary": {"subject_roles": ["signature"], "holdout_fractions": {"signature": 0.5},
                                            "stratify_keys": ["answer"]},
    "TCGA-SA/cancer_similarity_binary": {"subject_roles": ["indication"], "holdout_fractions": {"indication": 0.5},
                                         "stratify_keys": ["answer"]},
    "TCGA-SA/cancer_signatures_comparison": {"subject_roles": ["indication", "signature"],
                                             "holdout_fractions": {"indication": 0.4, "signature": 0.3},
                                             "stratify_keys": ["answer"]},
    "DSeqDE": {"subject_roles": ["target", "gene", "pathway"], "ratio": 0.2, "primary_role": "target",
               "stratify_keys": ["question_type"]},
    # drugs and cell lines are fully crossed, so both are held out as blocks
    "DPP": {"subject_roles": ["drug", "cell_line", "pathway"],
            "holdout_fractions": {"drug": 0.4, "cell_line": 0.4}},
    # target-disjoint; {"disjoint": false} gives the plain random split instead
    "TTP": {"subject_roles": ["target"], "ratio": 0.2, "stratify_keys": ["question_type"]},
    "SD": {"subject_roles": ["protein"], "ratio": 0.2, "stratify_keys": ["answer"]},
}


class PipelineError(RuntimeError):
    pass


@dataclass
class PipelineConfig:
    seed: int = 0
    synthetic_scale: float = 1.0
    factory: dict[str, Any] = field(default_factory=dict)
    splits: dict[str, dict[str, Any]] = field(default_factory=dict)
    trainer: dict[str, Any] = field(default_factory=dict)
    judge: dict[str, Any] | None = None
    mixture_cap: int = 5000
    toy: dict[str, Any] = field(default_factory=lambda: {"n_train": 2000, "n_test": 500, "n_cues": 8})

    @classmethod
    def from_file(cls, path: str | Path) -> PipelineConfig:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise PipelineError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


def module_seed(master: int, name: str) -> int:
    """Stage seed derived from the master seed; 32 bits for readability."""
    return derive_seed(master, name) % 2**32


def resolve_families(names: Sequence[str] | None) -> tuple[str, ...]:
    if not names or "all" in names:
        return FAMILIES
    out = []
    for n in names:
        key = n.lower().replace("-", "").replace("_", "")
        if key not in FAMILY_NAMES:
            raise PipelineError(f"unknown family {n!r}; choose from {', '.join(FAMILIES)}")
        out.append(FAMILY_NAMES[key])
    return tuple(out)


def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def json_digest(obj: Any) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


def write_json(path: str | Path, obj: Any) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path: str | Path) -> Any:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def count_lines(path: str | Path) -> int:
    with open(path, encoding="utf-8") as fh:
        return sum(1 for line in fh if line.strip())


# -- gen ----------------------------------------------------------------------


def load_sources(
    sources_dir: str | Path | None,
    families: Sequence[str],
    synthetic: bool,
    seed: int,
    scale: float,
) -> CorpusSources:
    if synthetic:
        return synthetic_sources(module_seed(seed, "synthetic"), scale)
    if sources_dir is None:
        raise PipelineError("no input tables: pass --sources DIR or --synthetic")
    d = Path(sources_dir)
    missing = [t for f in families for t in REQUIRED_TABLES[f] if not (d / t).exists()]
    if missing:
        raise PipelineError(f"missing input tables in {d}: {', '.join(sorted(set(missing)))}")
    return read_sources(d)


def run_gen(out: str | Path, src: CorpusSources, families: Sequence[str], seed: int, factory: Mapping[str, Any]) -> dict:
    """Generate, audit and write items.jsonl plus the tables they came from."""
    out = Path(out)
    cfg = FactoryConfig.from_dict({**factory, "families": list(families)})
    gen = generate_corpus(src, module_seed(seed, "gen"), cfg)
    audit = audit_items(gen.items, src)
    write_sources(out / "sources", src)
    n = write_jsonl(out / "items.jsonl", gen.items)
    write_jsonl(out / "issues.jsonl", gen.issues)
    manifest = {
        "stage": "gen",
        "schema_version": SCHEMA_VERSION,
        "seed": seed,
        "families": list(families),
        "counts": dict(sorted(Counter(it.family for it in gen.items).items())),
        "n_items": n,
        "question_types": question_type_histogram(gen.items),
        "issues": dict(sorted(Counter(f"{r['family']}/{r.get('kind', '?')}" for r in gen.issues).items())),
        "key_audit": {"n_checked": audit.n_checked, "mismatches": len(audit.mismatches), "ok": audit.ok},
        "files": {"items.jsonl": file_digest(out / "items.jsonl")},
    }
    write_json(out / "gen_manifest.json", manifest)
    if not audit.ok:
        write_jsonl(out / "audit_mismatches.jsonl", audit.mismatches)
        raise PipelineError(f"key audit found {len(audit.mismatches)} mismatches")
    log.info("gen: %d items, audit clean", n)
    return manifest


# -- split --------------------------------------------------------------------


def dpp_pathway_partition(src: CorpusSources, threshold: float = 0.3) -> dict[str, str]:
    """Ontology-subtree assignment of DPP pathways with the Jaccard filter."""
    if not src.dpp_library:
        return {}
    nodes = {n: frozenset(g) for n, g in src.dpp_library.items()}
    for p, c in src.dpp_ontology:
        nodes.setdefault(p, frozenset())
        nodes.setdefault(c, frozenset())
    return pathway_assignment(OntologyGraph(nodes, list(src.dpp_ontology)), threshold)


def unit_of(item: QAItem, units: Iterable[str]) -> str:
    """Split unit: ``family/question_type`` when configured, else the family."""
    key = f"{item.family}/{item.question_type}"
    return key if key in units else item.family


def _holdout_from_fractions(items: Sequence[QAItem], fractions: Mapping[str, float], seed: int) -> dict[str, list[str]]:
    """Seeded share of each role's entities, at least one and never all."""
    out = {}
    for role, frac in sorted(fractions.items()):
        ents = sorted({e for it in items for e in it.subjects.get(role, [])})
        if len(ents) < 2:
            raise PipelineError(f"role {role!r} has fewer than two entities; cannot hold out a fraction")
        k = min(len(ents) - 1, max(1, int(round(frac * len(ents)))))
        perm = rng_for(seed, "holdout", role).permutation(len(ents))
        out[role] = sorted(ents[i] for i in perm[:k])
    return out


def split_configs(
    items: Sequence[QAItem], seed: int, overrides: Mapping[str, Mapping[str, Any]], src: CorpusSources | None
) -> dict[str, dict[str, Any]]:
    """Resolved per-unit split configs (holdout fractions become explicit lists)."""
    known = set(DEFAULT_SPLITS) | set(overrides)
    groups: dict[str, list[QAItem]] = defaultdict(list)
    for it in items:
        groups[unit_of(it, known)].append(it)
    out = {}
    for unit in sorted(groups):
        base = DEFAULT_SPLITS.get(unit)
        if base is None:
            raise PipelineError(f"no split config for {unit!r}")
        cfg = {**base, **overrides.get(unit, {}), "seed": module_seed(seed, f"split/{unit}")}
        fracs = cfg.pop("holdout_fractions", None)
        if fracs:
            cfg["holdout"] = _holdout_from_fractions(groups[unit], fracs, cfg["seed"])
            cfg.pop("ratio", None)
        if unit == "DPP" and src is not None and "fixed" not in overrides.get(unit, {}):
            part = dpp_pathway_partition(src)
            if part:
                cfg["fixed"] = {"pathway": part}
        out[unit] = cfg
    return out


def _split_reports(train: list[QAItem], test: list[QAItem], configs: Mapping[str, Mapping[str, Any]]) -> dict:
    by_tr, by_te = defaultdict(list), defaultdict(list)
    for it in train:
        by_tr[unit_of(it, configs)].append(it)
    for it in test:
        by_te[unit_of(it, configs)].append(it)
    return {
        unit: verify_split(by_tr[unit], by_te[unit], SplitConfig.from_dict(cfg)).to_dict()
        for unit, cfg in sorted(configs.items())
    }


def run_split(out: str | Path, seed: int, overrides: Mapping[str, Mapping[str, Any]] | None = None) -> dict:
    out = Path(out)
    items = read_items(out / "items.jsonl")
    src = read_sources(out / "sources") if (out / "sources").exists() else None
    configs = split_configs(items, seed, overrides or {}, src)
    train, test, dropped = [], [], Counter()
    for unit, cfg in configs.items():
        res = entity_disjoint_split([it for it in items if unit_of(it, configs) == unit], SplitConfig.from_dict(cfg))
        train += res.train
        test += res.test
        dropped[unit.split("/")[0]] += res.report.n_dropped
        if not res.report.passed:
            log.warning("split %s: %s", unit, "; ".join(res.report.violations))
    train.sort(key=lambda it: it.id)
    test.sort(key=lambda it: it.id)
    write_jsonl(out / "train.jsonl", train)
    write_jsonl(out / "test.jsonl", test)
    reports = _split_reports(train, test, configs)
    write_json(out / "split_reports.json", reports)
    families = sorted({it.family for it in items}, key=FAMILIES.index)
    manifest = {
        "stage": "split",
        "schema_version": SCHEMA_VERSION,
        "seed": seed,
        "counts": {
            fam: {
                "train": sum(it.family == fam for it in train),
                "test": sum(it.family == fam for it in test),
                "dropped": dropped[fam],
            }
            for fam in families
        },
        "question_types": {"train": question_type_histogram(train), "test": question_type_histogram(test)},
        "split_configs": configs,
        "audit_digest": json_digest(reports),
        "passed": all(r["passed"] for r in reports.values()),
        "files": {"train.jsonl": file_digest(out / "train.jsonl"), "test.jsonl": file_digest(out / "test.jsonl")},
    }
    write_json(out / "manifest.json", manifest)
    return manifest


def run_verify(out: str | Path) -> list[str]:
    """Recompute every manifest digest and count; returns drift messages."""
    out = Path(out)
    man = read_json(out / "manifest.json")
    problems = []
    if man.get("schema_version") != SCHEMA_VERSION:
        problems.append(f"schema version {man.get('schema_version')!r} != {SCHEMA_VERSION!r}")
    for name, digest in man["files"].items():
        if not (out / name).exists():
            problems.append(f"{name}: missing")
        elif file_digest(out / name) != digest:
            problems.append(f"{name}: content digest changed")
    train, test = read_items(out / "train.jsonl"), read_items(out / "test.jsonl")
    for side, items in (("train", train), ("test", test)):
        got = Counter(it.family for it in items)
        for fam, c in man["counts"].items():
            if got.get(fam, 0) != c[side]:
                problems.append(f"{fam} {side}: manifest says {c[side]}, file has {got.get(fam, 0)}")
        if count_lines(out / f"{side}.jsonl") != sum(c[side] for c in man["counts"].values()):
            problems.append(f"{side}.jsonl: line count differs from manifest")
        if question_type_histogram(items) != man["question_types"][side]:
            problems.append(f"{side}: question_type histogram differs from manifest")
    reports = _split_reports(train, test, man["split_configs"])
    if json_digest(reports) != man["audit_digest"]:
        problems.append("split audit digest differs from a fresh verify run")
    for fam, rep in reports.items():
        problems += [f"{fam}: {v}" for v in rep["violations"]]
    return problems


# -- mixture ------------------------------------------------------------------


def run_mixture(
    inputs: Sequence[str | Path],
    out: str | Path,
    cap: int = 5000,
    seed: int = 0,
    exclude_families: Sequence[str] = (),
) -> dict:
    """Seeded uniform sample of min(cap, available) items per question type."""
    pools: dict[str, list[QAItem]] = defaultdict(list)
    for path in inputs:
        for it in read_items(path):
            if it.family in exclude_families:
                continue
            it.metadata = {**it.metadata, "mixture_source": Path(path).name}
            pools[f"{it.family}/{it.question_type}"].append(it)
    chosen = []
    available = {}
    for key in sorted(pools):
        pool = sorted(pools[key], key=lambda it: it.id)
        available[key] = len(pool)
        if len(pool) > cap:
            idx = np.sort(rng_for(module_seed(seed, "mixture"), key).choice(len(pool), size=cap, replace=False))
            pool = [pool[i] for i in idx]
        chosen += pool
    out = Path(out)
    n = write_jsonl(out, chosen)
    manifest = {
        "stage": "mixture",
        "schema_version": SCHEMA_VERSION,
        "seed": seed,
        "cap": cap,
        "excluded_families": list(exclude_families),
        "available": available,
        "question_types": question_type_histogram(chosen),
        "n_items": n,
    }
    write_json(out.with_name(out.stem + "_manifest.json"), manifest)
    return manifest


# -- train / score ----------------------------------------------------------------


def run_train(
    out: str | Path,
    seed: int,
    trainer: Mapping[str, Any] | None = None,
    toy: Mapping[str, Any] | None = None,
    train_items: Sequence[QAItem] | None = None,
    test_items: Sequence[QAItem] | None = None,
) -> dict:
    """Train the toy policy (planted-rule task unless items are given)."""
    out = Path(out)
    cfg = TrainerConfig.from_dict({**(trainer or {}), "seed": module_seed(seed, "train")})
    if train_items is None:
        toy = {"n_train": 2000, "n_test": 500, "n_cues": cfg.n_ctx, **(toy or {})}
        task = make_toy_task(toy["n_train"], toy["n_test"], toy["n_cues"], module_seed(seed, "toy"))
        train_items, test_items = task.train, task.test
        write_jsonl(out / "toy_train.jsonl", train_items)
        write_jsonl(out / "toy_test.jsonl", test_items)
    init = ToyPolicy.with_skeleton_prior(cfg.n_ctx, cfg.max_len, cfg.prior_strength)
    res = train(train_items, config=cfg)
    write_metrics(out / "metrics.tsv", res.metrics)
    save_policy(out / "policy.bin", res.policy, cfg.seed)
    summary: dict[str, Any] = {"config": asdict(cfg), "steps": len(res.metrics)}
    if test_items:
        summary["initial"] = evaluate(init, test_items, cfg.eval_samples, cfg.seed)
        summary["final"] = evaluate(res.policy, test_items, cfg.eval_samples, cfg.seed)
        write_jsonl(out / "completions.jsonl", sample_completions(res.policy, test_items, cfg.seed))
    write_json(out / "train_summary.json", summary)
    return summary


def run_score(completions: str | Path, items: str | Path, out: str | Path, match_option_text: bool = False) -> int:
    by_id = {it.id: it for it in read_items(items)}
    rows = score_completions(iter_jsonl(completions), by_id, match_option_text)
    return write_jsonl(out, rows)


# -- judge ----------------------------------------------------------------------


def run_judge(
    items: str | Path,
    out: str | Path,
    config: JudgeConfig,
    pairs: str | Path | None = None,
    traces: str | Path | None = None,
    transport=None,
) -> int:
    """Preference pairs {item_id, response_a, response_b}; traces {item_id, reasoning, answer}."""
    by_id = {it.id: it for it in read_items(items)}
    records = []
    with JudgeClient(config, transport) as client:
        for rec in iter_jsonl(pairs) if pairs else []:
            res = judge_preference(_lookup(by_id, rec["item_id"]), rec["response_a"], rec["response_b"], config, client)
            records.append({"kind": "preference", **res.to_dict()})
        for rec in iter_jsonl(traces) if traces else []:
            res = judge_consistency(_lookup(by_id, rec["item_id"]), rec["reasoning"], rec["answer"], config, client)
            records.append({"kind": "consistency", **res.to_dict()})
    return write_jsonl(out, records)


def _lookup(by_id: Mapping[str, QAItem], item_id: str) -> QAItem:
    if item_id not in by_id:
        raise PipelineError(f"unknown item id {item_id!r}")
    return by_id[item_id]


# -- report ---------------------------------------------------------------------


def build_report(rewards: Sequence[Mapping], items: Mapping[str, QAItem], judgments: Sequence[Mapping]) -> list[tuple]:
    """Rows of (section, group, n, value)."""
    orphans = sorted({r["item_id"] for r in [*rewards, *judgments]} - set(items))
    if orphans:
        shown = ", ".join(orphans[:10]) + (" ..." if len(orphans) > 10 else "")
        raise PipelineError(f"{len(orphans)} ids not found in the items file: {shown}")
    rows: list[tuple] = []
    for level in ("family", "question_type"):
        groups: dict[str, list[float]] = defaultdict(list)
        for r in rewards:
            it = items[r["item_id"]]
            key = it.family if level == "family" else f"{it.family}/{it.question_type}"
            groups[key].append(float(r["correct"]))
        rows += [(f"accuracy_by_{level}", k, len(v), repr(sum(v) / len(v))) for k, v in sorted(groups.items())]
    if rewards:
        rows.append(("accuracy", "all", len(rewards), repr(sum(float(r["correct"]) for r in rewards) / len(rewards))))
    prefs = [j for j in judgments if j.get("kind") == "preference"]
    cons = [j for j in judgments if j.get("kind") == "consistency"]
    if prefs:
        rows.append(("preference", "mean_rating", len(prefs), repr(sum(j["mean"] for j in prefs) / len(prefs))))
    else:
        rows.append(("preference", "absent", 0, ""))
    if cons:
        rows.append(("consistency", "rate", len(cons), repr(sum(bool(j["consistent"]) for j in cons) / len(cons))))
    else:
        rows.append(("consistency", "absent", 0, ""))
    return rows


def run_report(rewards: str | Path, items: str | Path, out: str | Path, judgments: str | Path | None = None) -> list[tuple]:
    by_id = {it.id: it for it in read_items(items)}
    rw = list(iter_jsonl(rewards))
    jd = list(iter_jsonl(judgments)) if judgments and Path(judgments).exists() else []
    rows = build_report(rw, by_id, jd)
    write_table(out, ("section", "group", "n", "value"), rows)
    return rows
