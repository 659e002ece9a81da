from __future__ import annotations

import json

import httpx
import pytest

from biorlvr.cli import main
from biorlvr.judge import JudgeConfig
from biorlvr.pipeline import PipelineError, build_report, count_lines, read_json, run_judge, run_mixture
from biorlvr.qa.items import make_item, read_items, write_jsonl


def _run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    assert _run("--synthetic", "--seed", 5, "gen", "--scale", 0.25, "--out", out) == 0
    assert _run("split", "--out", out, "--seed", 5) == 0
    return out


def test_gen_dpp_twice_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert _run("gen", "--family", "dpp", "--synthetic", "--seed", 7, "--scale", 0.25, "--out", d) == 0
    for name in ("items.jsonl", "gen_manifest.json", "issues.jsonl", "sources/dpp.tsv"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    man = read_json(a / "gen_manifest.json")
    assert set(man["counts"]) == {"DPP"}


def test_manifest_counts_match_files(corpus):
    gen = read_json(corpus / "gen_manifest.json")
    assert gen["n_items"] == count_lines(corpus / "items.jsonl") == sum(gen["counts"].values())
    assert gen["key_audit"]["ok"] and gen["key_audit"]["n_checked"] == gen["n_items"]
    man = read_json(corpus / "manifest.json")
    for side in ("train", "test"):
        assert count_lines(corpus / f"{side}.jsonl") == sum(c[side] for c in man["counts"].values())
    assert man["passed"] and man["schema_version"] == "1" and man["seed"] == 5


def test_every_family_is_entity_disjoint(corpus):
    man = read_json(corpus / "manifest.json")
    train, test = read_items(corpus / "train.jsonl"), read_items(corpus / "test.jsonl")
    for unit, cfg in man["split_configs"].items():
        if not cfg.get("disjoint", True):
            continue
        fam = unit.split("/")[0]
        qt = unit.split("/")[1] if "/" in unit else None

        def mine(it):
            return it.family == fam and (qt is None or it.question_type == qt)

        for role in cfg["subject_roles"]:
            a = {e for it in train if mine(it) for e in it.subjects.get(role, [])}
            b = {e for it in test if mine(it) for e in it.subjects.get(role, [])}
            assert not a & b, (unit, role)


def test_verify_ok_then_detects_tampering(corpus, tmp_path, capsys):
    assert _run("verify", "--out", corpus) == 0
    import shutil

    copy = tmp_path / "copy"
    shutil.copytree(corpus, copy)
    lines = (copy / "train.jsonl").read_text().splitlines()
    (copy / "train.jsonl").write_text("\n".join(lines[:-1]) + "\n")
    assert _run("verify", "--out", copy) == 1
    assert "DRIFT" in capsys.readouterr().out


def test_missing_inputs_listed(tmp_path, capsys):
    (tmp_path / "src").mkdir()
    assert _run("gen", "--family", "dpp", "spde", "--sources", tmp_path / "src", "--out", tmp_path / "o") == 2
    err = capsys.readouterr().err
    assert "dpp.tsv" in err and "spde.tsv" in err


def test_gen_from_written_sources(corpus, tmp_path):
    assert _run("gen", "--family", "sd", "--sources", corpus / "sources", "--seed", 5, "--out", tmp_path) == 0
    assert read_json(tmp_path / "gen_manifest.json")["key_audit"]["ok"]


def test_unknown_family(tmp_path):
    assert _run("gen", "--family", "nope", "--synthetic", "--out", tmp_path) == 2


def _toy_items(prefix, qtype, n, family="TOY"):
    return [
        make_item(item_id=f"{prefix}-{i:06d}", family=family, question_type=qtype, question="q", correct="a",
                  others=["b"], subjects={"x": [f"{prefix}{i}"]}, metadata={})
        for i in range(n)
    ]


def test_mixture_cap(tmp_path):
    write_jsonl(tmp_path / "big.jsonl", _toy_items("big", "many", 40_000))
    write_jsonl(tmp_path / "small.jsonl", _toy_items("small", "few", 800) + _toy_items("sd", "p", 30, family="SD"))
    out = tmp_path / "mix.jsonl"
    man = run_mixture([tmp_path / "big.jsonl", tmp_path / "small.jsonl"], out, cap=5000, seed=1, exclude_families=("SD",))
    assert man["question_types"] == {"TOY/few": 800, "TOY/many": 5000}
    assert all(v <= 5000 for v in man["question_types"].values())
    items = read_items(out)
    assert len(items) == 5800 and len({it.id for it in items}) == 5800
    assert {it.metadata["mixture_source"] for it in items} == {"big.jsonl", "small.jsonl"}
    again = tmp_path / "mix2.jsonl"
    run_mixture([tmp_path / "big.jsonl", tmp_path / "small.jsonl"], again, cap=5000, seed=1, exclude_families=("SD",))
    assert out.read_bytes() == again.read_bytes()


def test_mixture_cli_paper_mixture(corpus):
    assert _run("mixture", "--out", corpus, "--paper-mixture", "--cap", 50) == 0
    man = read_json(corpus / "mixture_manifest.json")
    assert all(v <= 50 for v in man["question_types"].values())
    assert not any(k.startswith("SD/") for k in man["question_types"])


def test_report_sections():
    items = {it.id: it for it in _toy_items("r", "t", 4)}
    rewards = [{"item_id": i, "correct": 1.0} for i in items]
    rows = build_report(rewards, items, [])
    assert ("accuracy_by_family", "TOY", 4, "1.0") in rows
    assert ("preference", "absent", 0, "") in rows
    judg = [{"kind": "consistency", "item_id": i, "consistent": c} for i, c in zip(items, [True, False, True, True])]
    judg.append({"kind": "preference", "item_id": "r-000000", "mean": 0.6})
    rows = build_report(rewards, items, judg)
    rate = [r for r in rows if r[0] == "consistency"][0]
    assert rate[2] == 4 and float(rate[3]) == sum(j["consistent"] for j in judg[:4]) / 4
    with pytest.raises(PipelineError, match="ghost"):
        build_report([{"item_id": "ghost", "correct": 1.0}], items, [])


def test_train_score_report_cli(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"toy": {"n_train": 200, "n_test": 50, "n_cues": 8}}))
    out = tmp_path / "run"
    assert _run("--config", cfg, "--seed", 1, "train", "--out", out) == 0
    summary = read_json(out / "train_summary.json")
    assert summary["steps"] == 20 and summary["final"]["mean_reward"] > summary["initial"]["mean_reward"]
    assert count_lines(out / "metrics.tsv") == 21
    assert _run("score", "--out", out) == 0
    assert count_lines(out / "rewards.jsonl") == 50
    assert _run("report", "--out", out) == 0
    assert (out / "report.tsv").read_text().startswith("section\tgroup\tn\tvalue\n")


def test_bad_config_key(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"sed": 1}')
    assert _run("--config", cfg, "verify", "--out", tmp_path) == 2


def test_run_judge_offline(tmp_path):
    items = _toy_items("j", "t", 2)
    write_jsonl(tmp_path / "items.jsonl", items)
    write_jsonl(tmp_path / "pairs.jsonl", [{"item_id": "j-000000", "response_a": "x", "response_b": "y"}])
    write_jsonl(tmp_path / "traces.jsonl", [{"item_id": "j-000001", "reasoning": "so A", "answer": "A"}])

    def handler(req):
        msgs = json.loads(req.content)["messages"]
        text = '<json>{"rating": 1}</json>' if "Response 1" in msgs[1]["content"] else "<answer>A</answer>"
        return httpx.Response(200, json={"choices": [{"message": {"content": text}}]})

    cfg = JudgeConfig(endpoint="http://mock/v1", repeats=4, backoff=0)
    n = run_judge(tmp_path / "items.jsonl", tmp_path / "j.jsonl", cfg, tmp_path / "pairs.jsonl",
                  tmp_path / "traces.jsonl", transport=httpx.MockTransport(handler))
    recs = [json.loads(x) for x in (tmp_path / "j.jsonl").read_text().splitlines()]
    assert n == 2 and recs[0]["kind"] == "preference" and recs[0]["mean"] == 0.0
    assert recs[1]["consistent"] is True
