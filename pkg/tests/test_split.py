from __future__ import annotations

import dataclasses
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from biorlvr.qa.items import make_item, shuffle_options
from biorlvr.qa.spde import gen_spde
from biorlvr.qa.synthetic import SyntheticSizes, synth_spde
from biorlvr.split import (
    DROP,
    OntologyGraph,
    SplitConfig,
    SplitError,
    entity_disjoint_split,
    max_jaccard_filter,
    ontology_subtrees,
    partition_ontology,
    pathway_assignment,
    read_ontology,
    verify_split,
)

HOLDOUT = "Invasive breast carcinoma"


@pytest.fixture(scope="module")
def spde_items():
    recs = synth_spde(7, SyntheticSizes(spde_indications=5, spde_genes=1500))
    recs = [dataclasses.replace(r, indication=HOLDOUT) if r.indication == "Indication 04" else r for r in recs]
    return gen_spde(recs, 600, 7).items


@pytest.fixture(scope="module")
def spde_split(spde_items):
    cfg = SplitConfig(("indication", "gene"), holdout={"indication": [HOLDOUT]}, stratify_keys=("question_type",))
    return entity_disjoint_split(spde_items, cfg), cfg


def test_spde_holdout_indication(spde_split):
    res, _ = spde_split
    assert res.test and res.train
    assert {it.subjects["indication"][0] for it in res.test} == {HOLDOUT}
    assert HOLDOUT not in {it.subjects["indication"][0] for it in res.train}
    train_genes = {g for it in res.train for g in it.subjects["gene"]}
    test_genes = {g for it in res.test for g in it.subjects["gene"]}
    assert train_genes.isdisjoint(test_genes)
    assert all(it.split == "train" for it in res.train) and all(it.split == "test" for it in res.test)
    assert res.report.passed, res.report.violations


def test_direction_strata_within_tolerance(spde_split):
    res, _ = spde_split
    pooled = res.train + res.test
    target = np.mean([it.question_type == "upregulated" for it in pooled])
    for side in (res.train, res.test):
        share = np.mean([it.question_type == "upregulated" for it in side])
        assert abs(share - target) <= 0.05


def test_injected_shared_gene_is_one_violation(spde_split):
    res, cfg = spde_split
    leak_gene = res.train[0].subjects["gene"][0]
    bad = dataclasses.replace(res.test[0], subjects={**res.test[0].subjects, "gene": [leak_gene, "X"]})
    report = verify_split(res.train, [bad] + res.test[1:], cfg)
    assert report.overlaps["gene"] == 1
    assert len(report.violations) == 1 and "gene" in report.violations[0]


def test_verify_is_idempotent_and_self_consistent(spde_split):
    res, cfg = spde_split
    a = verify_split(res.train, res.test, cfg).to_json()
    b = verify_split(res.train, res.test, cfg).to_json()
    assert a == b
    assert '"passed": true' in a


def test_corrupted_split_fails(spde_split):
    res, cfg = spde_split
    report = verify_split(res.train + res.test[:5], res.test, cfg)
    assert not report.passed and report.overlaps["indication"] == 1


def test_split_deterministic(spde_items):
    cfg = SplitConfig(("indication", "gene"), ratio=0.3, seed=4, stratify_keys=("question_type", "answer"))
    a = entity_disjoint_split(spde_items, cfg)
    b = entity_disjoint_split(spde_items, cfg)
    assert [i.id for i in a.test] == [i.id for i in b.test]
    assert a.report.passed, a.report.violations


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_split_then_verify_passes_for_any_seed(seed):
    recs = synth_spde(seed % 7, SyntheticSizes(spde_indications=4, spde_genes=400))
    items = gen_spde(recs, 120, seed).items
    cfg = SplitConfig(("indication", "gene"), ratio=0.25, seed=seed, stratify_keys=("question_type",))
    res = entity_disjoint_split(items, cfg)
    again = verify_split(res.train, res.test, cfg)
    assert again.passed, again.violations
    assert len(res.train) + len(res.test) + res.report.n_dropped == len(items)


def _toy(i: int, ent: str) -> object:
    return make_item(
        item_id=f"toy-{i:06d}",
        family="TOY",
        question_type="t",
        question="q",
        correct="yes",
        others=["no"],
        subjects={"x": [ent]},
        metadata={},
    )


def test_entity_in_every_item_is_infeasible():
    items = [
        make_item(item_id=f"t{i}", family="TOY", question_type="t", question="q", correct="a", others=["b"],
                  subjects={"gene": ["SHARED", f"G{i}"]}, metadata={})
        for i in range(5)
    ]
    with pytest.raises(SplitError, match="SHARED"):
        entity_disjoint_split(items, SplitConfig(("gene",), ratio=0.5))


def test_letter_balance_large_corpus():
    items = [shuffle_options(_toy(i, f"e{i % 3000}"), 1) for i in range(24_000)]
    cfg = SplitConfig(("x",), ratio=0.5, seed=2)
    res = entity_disjoint_split(items, cfg)
    assert res.report.passed, res.report.violations
    for side in ("train", "test"):
        assert abs(res.report.letter_balance[side]["A"] - 0.5) <= 0.02
    skewed = [dataclasses.replace(it, answer="A") for it in res.train]
    assert any("letter" in v for v in verify_split(skewed, res.test, cfg).violations)


def test_random_mode_reports_overlap_without_violation():
    items = [_toy(i, f"e{i % 5}") for i in range(100)]
    cfg = SplitConfig(("x",), ratio=0.2, disjoint=False)
    res = entity_disjoint_split(items, cfg)
    assert len(res.test) == 20
    assert res.report.overlaps["x"] > 0 and res.report.passed


def test_config_validation():
    with pytest.raises(SplitError):
        SplitConfig(())
    with pytest.raises(SplitError):
        SplitConfig(("x",), ratio=1.0)
    with pytest.raises(SplitError):
        SplitConfig(("x",))


# -- ontology ---------------------------------------------------------------


def _graph(nodes, edges):
    return OntologyGraph({n: frozenset({n}) for n in nodes}, edges)


def test_two_roots_alternate_by_size():
    g = _graph("abcde", [("a", "b"), ("a", "c"), ("d", "e")])
    part = partition_ontology(g)
    assert part == {"a": "train", "b": "train", "c": "train", "d": "test", "e": "test"}


def test_isolated_node_joins_alternation():
    g = _graph("abcdef", [("a", "b"), ("a", "c"), ("d", "e")])
    assert [r for r, _ in ontology_subtrees(g)] == ["a", "d", "f"]
    part = partition_ontology(g)
    assert part["f"] == "train"


def test_size_ties_broken_by_root_id():
    g = _graph("xyab", [("y", "b"), ("x", "a")])
    assert partition_ontology(g) == {"x": "train", "a": "train", "y": "test", "b": "test"}


def test_shared_descendant_goes_to_first_root():
    g = _graph("abcdz", [("a", "b"), ("a", "c"), ("a", "z"), ("d", "z")])
    subs = dict(ontology_subtrees(g))
    assert "z" in subs["a"] and "z" not in subs["d"]
    assert partition_ontology(g)["z"] == "train"


def test_cycle_rejected():
    with pytest.raises(SplitError, match="cycle"):
        partition_ontology(_graph("abc", [("a", "b"), ("b", "c"), ("c", "b")]))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_random_dag_every_node_once(seed):
    rng = np.random.default_rng(seed)
    nodes = [f"n{i:02d}" for i in range(50)]
    # edges only from lower to higher index keep the graph acyclic
    edges = [(nodes[i], nodes[j]) for i, j in itertools.combinations(range(50), 2) if rng.random() < 0.04]
    g = _graph(nodes, edges)
    part = partition_ontology(g)
    assert sorted(part) == nodes
    subs = ontology_subtrees(g)
    seen = [n for _, members in subs for n in members]
    assert sorted(seen) == nodes and len(seen) == len(set(seen))
    for k, (root, members) in enumerate(subs):
        side = "train" if k % 2 == 0 else "test"
        assert all(part[n] == side for n in members)
        assert root in members
    assert partition_ontology(g) == part


def test_read_ontology(tmp_path):
    p = tmp_path / "rel.txt"
    p.write_text("R1\tR2\nR1\tR3\n# comment\nR4,R5\n")
    g = read_ontology(p, {"R2": ["A", "B"]})
    assert g.roots() == ["R1", "R4"]
    assert g.nodes["R2"] == frozenset({"A", "B"})


# -- Jaccard -----------------------------------------------------------------


def test_jaccard_examples():
    train = {"S": {"b", "c"}, "U": {"x", "y"}}
    assert max_jaccard_filter({"T": {"a", "b"}}, train) == []
    assert max_jaccard_filter({"T": {"p", "q"}}, train) == ["T"]
    assert max_jaccard_filter({"T": {"b", "c"}}, train) == []
    assert max_jaccard_filter({"T": {"a", "b"}}, train, threshold=1 / 3) == ["T"]
    with pytest.raises(SplitError):
        max_jaccard_filter({"T": set()}, train)


@settings(max_examples=100, deadline=None)
@given(
    st.dictionaries(st.text("ab", min_size=1, max_size=3), st.sets(st.integers(0, 12), min_size=1), min_size=1, max_size=6),
    st.dictionaries(st.text("cd", min_size=1, max_size=3), st.sets(st.integers(0, 12), min_size=1), min_size=1, max_size=6),
    st.floats(0, 1),
    st.floats(0, 1),
)
def test_jaccard_filter_monotone(test_sets, train_sets, t1, t2):
    lo, hi = sorted((t1, t2))
    keep_lo = set(max_jaccard_filter(test_sets, train_sets, lo))
    keep_hi = set(max_jaccard_filter(test_sets, train_sets, hi))
    assert keep_lo <= keep_hi
    for name in keep_hi:
        t = set(test_sets[name])
        assert all(len(t & set(s)) / len(t | set(s)) <= hi for s in train_sets.values())


def test_pathway_assignment_drops_leaky_test_nodes():
    g = OntologyGraph(
        {"A": frozenset("abc"), "A1": frozenset("abcd"), "B": frozenset("abce"), "C": frozenset("xyz")},
        [("A", "A1")],
    )
    part = pathway_assignment(g)
    assert part["A"] == part["A1"] == "train"
    # B goes to test but overlaps A1 heavily; C is clean
    assert part["B"] == DROP
    assert part["C"] == "train"


def test_fixed_pathway_assignment_in_split():
    items = []
    for i in range(40):
        pw = ["P1", "P2", "P3", "P4"][i % 4]
        items.append(
            make_item(item_id=f"d{i:03d}", family="TOY", question_type="t", question="q", correct=pw, others=["Z" + pw],
                      subjects={"drug": [f"D{i % 8}"], "pathway": [pw]}, metadata={})
        )
    fixed = {"pathway": {"P1": "train", "P2": "test", "P3": "train", "P4": DROP}}
    res = entity_disjoint_split(items, SplitConfig(("drug", "pathway"), fixed=fixed))
    assert all(it.subjects["pathway"][0] != "P4" for it in res.train + res.test)
    assert {it.subjects["pathway"][0] for it in res.test} <= {"P2"}
    assert res.report.overlaps == {"drug": 0, "pathway": 0}


def test_balance_repairs_underrepresented_stratum():
    from biorlvr.split import _balance, _shares

    items = []
    for qt, n in (("a", 24), ("b", 71), ("c", 5)):
        items += [make_item(item_id=f"{qt}{i}", family="TOY", question_type=qt, question="q", correct="y", others=["n"],
                            subjects={"x": [f"{qt}{i}"]}, metadata={}) for i in range(n)]
    target = {"question_type=a": 0.2, "question_type=b": 0.67, "question_type=c": 0.13}
    out = _balance(items, ("question_type",), target, 0.04, np.random.default_rng(0))
    shares = _shares(out, ("question_type",))
    assert all(abs(shares.get(s, 0) - t) <= 0.04 for s, t in target.items())
