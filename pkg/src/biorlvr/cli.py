"""Command line entry point: ``biorlvr <command> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .judge import JudgeConfig
from .pipeline import (
    PipelineConfig,
    PipelineError,
    load_sources,
    resolve_families,
    run_gen,
    run_judge,
    run_mixture,
    run_report,
    run_score,
    run_split,
    run_train,
    run_verify,
)
from .qa.items import iter_jsonl, read_items, write_jsonl
from .rewards import parse_completion
from .split import SplitError

log = logging.getLogger("biorlvr")

COMMANDS = ("gen", "split", "verify", "mixture", "train", "score", "judge", "report", "all")


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", type=Path, default=d, help="JSON pipeline config")
    parser.add_argument("--seed", type=int, default=d, help="master seed (overrides the config)")
    parser.add_argument("--synthetic", action="store_true", default=argparse.SUPPRESS if suppress else False,
                        help="use built-in synthetic source tables")
    parser.add_argument("--out", type=Path, default=argparse.SUPPRESS if suppress else Path("out"),
                        help="output directory (default: out)")
    parser.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="biorlvr", description="QA corpus factory, split auditor and toy RLVR lab")
    _global_flags(p, suppress=False)
    sub = p.add_subparsers(dest="command", required=True)

    def cmd(name: str, help: str) -> argparse.ArgumentParser:
        sp = sub.add_parser(name, help=help)
        _global_flags(sp, suppress=True)
        return sp

    g = cmd("gen", "generate and audit QA items")
    g.add_argument("--family", nargs="+", default=["all"], help="families to generate (default: all)")
    g.add_argument("--sources", type=Path, help="directory of source tables")
    g.add_argument("--scale", type=float, help="synthetic fixture scale")

    cmd("split", "entity-disjoint train/test split of OUT/items.jsonl")
    cmd("verify", "recompute manifest digests and split audits")

    m = cmd("mixture", "cap each question type for a training mixture")
    m.add_argument("--in", dest="inputs", type=Path, nargs="+", help="item files (default: OUT/train.jsonl)")
    m.add_argument("--cap", type=int, help="items per question type (default from config, 5000)")
    m.add_argument("--paper-mixture", action="store_true", help="apply the cap and leave out the SD family")
    m.add_argument("--output", type=Path, help="default: OUT/mixture.jsonl")

    t = cmd("train", "train the toy policy with BNPO")
    t.add_argument("--items", type=Path, help="training items (default: planted-rule toy task)")
    t.add_argument("--test-items", type=Path)

    s = cmd("score", "score completions with the verifiable rewards")
    s.add_argument("--completions", type=Path, help="default: OUT/completions.jsonl")
    s.add_argument("--items", type=Path, help="default: OUT/toy_test.jsonl")
    s.add_argument("--output", type=Path, help="default: OUT/rewards.jsonl")
    s.add_argument("--match-option-text", action="store_true")

    j = cmd("judge", "preference and consistency judgments via a chat endpoint")
    j.add_argument("--items", type=Path, required=True)
    j.add_argument("--pairs", type=Path, help="JSONL of {item_id, response_a, response_b}")
    j.add_argument("--traces", type=Path, help="JSONL of {item_id, reasoning, answer}")
    j.add_argument("--output", type=Path, help="default: OUT/judgments.jsonl")
    j.add_argument("--endpoint")
    j.add_argument("--model")
    j.add_argument("--repeats", type=int)

    r = cmd("report", "accuracy, preference and consistency tables")
    r.add_argument("--rewards", type=Path, help="default: OUT/rewards.jsonl")
    r.add_argument("--items", type=Path, help="default: OUT/toy_test.jsonl")
    r.add_argument("--judgments", type=Path, help="default: OUT/judgments.jsonl if present")
    r.add_argument("--output", type=Path, help="default: OUT/report.tsv")

    a = cmd("all", "gen, split, verify, mixture, train, score, (judge), report")
    a.add_argument("--sources", type=Path)
    a.add_argument("--scale", type=float)
    return p


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _gen(args, cfg: PipelineConfig) -> int:
    fams = resolve_families(args.family)
    scale = args.scale if args.scale is not None else cfg.synthetic_scale
    src = load_sources(args.sources, fams, args.synthetic, cfg.seed, scale)
    man = run_gen(args.out, src, fams, cfg.seed, cfg.factory)
    _emit({"items": man["n_items"], "counts": man["counts"], "key_audit": man["key_audit"]})
    return 0


def _split(args, cfg: PipelineConfig) -> int:
    man = run_split(args.out, cfg.seed, cfg.splits)
    _emit({"counts": man["counts"], "passed": man["passed"]})
    return 0 if man["passed"] else 1


def _verify(args, cfg: PipelineConfig) -> int:
    problems = run_verify(args.out)
    for msg in problems:
        print(f"DRIFT {msg}")
    print("verify: ok" if not problems else f"verify: {len(problems)} problem(s)")
    return 0 if not problems else 1


def _mixture(args, cfg: PipelineConfig) -> int:
    inputs = args.inputs or [args.out / "train.jsonl"]
    cap = args.cap if args.cap is not None else cfg.mixture_cap
    exclude = ("SD",) if args.paper_mixture else ()
    man = run_mixture(inputs, args.output or args.out / "mixture.jsonl", cap, cfg.seed, exclude)
    _emit({"n_items": man["n_items"], "question_types": man["question_types"]})
    return 0


def _train(args, cfg: PipelineConfig) -> int:
    train_items = read_items(args.items) if args.items else None
    test_items = read_items(args.test_items) if args.test_items else None
    summary = run_train(args.out, cfg.seed, cfg.trainer, cfg.toy, train_items, test_items)
    _emit({k: summary[k] for k in ("steps", "initial", "final") if k in summary})
    return 0


def _score(args, cfg: PipelineConfig) -> int:
    n = run_score(
        args.completions or args.out / "completions.jsonl",
        args.items or args.out / "toy_test.jsonl",
        args.output or args.out / "rewards.jsonl",
        args.match_option_text,
    )
    print(f"scored {n} completions")
    return 0


def _judge_config(cfg: PipelineConfig, args=None) -> JudgeConfig:
    d = dict(cfg.judge or {})
    for k in ("endpoint", "model", "repeats"):
        v = getattr(args, k, None) if args is not None else None
        if v is not None:
            d[k] = v
    return JudgeConfig.from_dict(d)


def _judge(args, cfg: PipelineConfig) -> int:
    if not args.pairs and not args.traces:
        raise PipelineError("nothing to judge: pass --pairs and/or --traces")
    n = run_judge(args.items, args.output or args.out / "judgments.jsonl", _judge_config(cfg, args), args.pairs, args.traces)
    print(f"wrote {n} judgments")
    return 0


def _report(args, cfg: PipelineConfig) -> int:
    rows = run_report(
        args.rewards or args.out / "rewards.jsonl",
        args.items or args.out / "toy_test.jsonl",
        args.output or args.out / "report.tsv",
        args.judgments or args.out / "judgments.jsonl",
    )
    for row in rows:
        print("\t".join(map(str, row)))
    return 0


def _all(args, cfg: PipelineConfig) -> int:
    out = args.out
    args.family = ["all"]
    steps = [
        ("gen", _gen),
        ("split", _split),
        ("verify", _verify),
    ]
    for name, fn in steps:
        log.info("== %s", name)
        rc = fn(args, cfg)
        if rc:
            return rc
    man = run_mixture([out / "train.jsonl"], out / "mixture.jsonl", cfg.mixture_cap, cfg.seed, ("SD",))
    print(f"mixture: {man['n_items']} items")
    log.info("== train")
    summary = run_train(out, cfg.seed, cfg.trainer, cfg.toy)
    _emit({"initial": summary["initial"], "final": summary["final"]})
    run_score(out / "completions.jsonl", out / "toy_test.jsonl", out / "rewards.jsonl")
    judgments = None
    if cfg.judge and cfg.judge.get("endpoint"):
        log.info("== judge")
        # consistency of the toy policy's own traces against its answers
        traces = []
        for rec in iter_jsonl(out / "completions.jsonl"):
            p = parse_completion(rec["text"])
            if p.think_body and p.answer_body:
                traces.append({"item_id": rec["item_id"], "reasoning": p.think_body, "answer": p.answer_body})
        write_jsonl(out / "traces.jsonl", traces)
        run_judge(out / "toy_test.jsonl", out / "judgments.jsonl", _judge_config(cfg), traces=out / "traces.jsonl")
        judgments = out / "judgments.jsonl"
    rows = run_report(out / "rewards.jsonl", out / "toy_test.jsonl", out / "report.tsv", judgments)
    for row in rows:
        print("\t".join(map(str, row)))
    return 0


HANDLERS = {
    "gen": _gen,
    "split": _split,
    "verify": _verify,
    "mixture": _mixture,
    "train": _train,
    "score": _score,
    "judge": _judge,
    "report": _report,
    "all": _all,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
        if args.seed is not None:
            cfg.seed = args.seed
        return HANDLERS[args.command](args, cfg)
    except (PipelineError, SplitError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
