from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from biorlvr.rl.bnpo import (
    BatchError,
    GroupBatch,
    bnpo_loss,
    clipped_surrogate,
    dapo_loss,
    finite_difference_grad,
    group_advantages,
    importance_ratios,
    relative_error,
)
from biorlvr.rl.policy import EOS, TOK, VOCAB, Rollout, ToyPolicy, decode, log_softmax, sample_group
from biorlvr.rl.toytask import make_toy_task
from biorlvr.rl.trainer import TrainerConfig, evaluate, load_policy, save_policy, train, write_metrics

# -- oracles ----------------------------------------------------------------


def oracle_advantages(rewards, eps):
    g = len(rewards)
    mu = sum(rewards) / g
    sd = math.sqrt(sum((r - mu) ** 2 for r in rewards) / g)
    return [(r - mu) / (sd + eps) if sd + eps > 0 else 0.0 for r in rewards]


def random_batch(rng, n_groups, G=3, n_ctx=2, max_len=4, ref_noise=0.3):
    """Random policy, a perturbed reference and random token sequences."""
    theta = rng.normal(0, 1, (n_ctx * max_len * (len(VOCAB) + 1), len(VOCAB)))
    pol = ToyPolicy(n_ctx, max_len, theta)
    ref = ToyPolicy(n_ctx, max_len, theta + rng.normal(0, ref_noise, theta.shape))
    groups = []
    for n in range(n_groups):
        ctx = int(rng.integers(n_ctx))
        grp = []
        for _ in range(G):
            length = int(rng.integers(1, max_len + 1))
            toks = rng.integers(0, len(VOCAB), length)
            prev = [len(VOCAB), *toks[:-1]]
            rows = np.array([pol.state(ctx, p, pv) for p, pv in enumerate(prev)])
            ro = Rollout(f"p{n}", toks, rows, pol.log_probs(rows, toks), ref.log_probs(rows, toks), decode(toks))
            ro.reward = float(rng.integers(0, 17)) / 4
            grp.append(ro)
        groups.append(grp)
    return pol, GroupBatch.build(groups, eps_std=1e-4)


# -- advantages --------------------------------------------------------------


def test_advantage_examples():
    assert group_advantages([1, 0], 0).tolist() == [1.0, -1.0]
    assert group_advantages([2, 2, 2], 1e-4).tolist() == [0, 0, 0]
    assert group_advantages([2, 2, 2], 0).tolist() == [0, 0, 0]
    assert group_advantages([3, 1, 0], 0).tolist() == group_advantages([5, 3, 2], 0).tolist()
    with pytest.raises(BatchError):
        group_advantages([1.0], 0)


rewards_grid = st.lists(st.integers(0, 16).map(lambda k: k / 4), min_size=2, max_size=12)


@settings(max_examples=300, deadline=None)
@given(rewards_grid, st.sampled_from([0.5, 1.0, 2.0, 3.0, 0.75, 7.0]), st.integers(-8, 8).map(lambda k: k / 4))
def test_affine_invariance_exact(rewards, a, b):
    moved = [a * r + b for r in rewards]
    assert group_advantages(moved, 0).tolist() == group_advantages(rewards, 0).tolist()


@settings(max_examples=300, deadline=None)
@given(rewards_grid, st.sampled_from([0.0, 1e-4, 0.1]))
def test_advantages_match_oracle_and_sum_to_zero(rewards, eps):
    adv = group_advantages(rewards, eps)
    np.testing.assert_allclose(adv, oracle_advantages(rewards, eps), rtol=1e-12, atol=1e-12)
    # exact zero-sum holds in real arithmetic; the float sum is within G ulps
    assert abs(math.fsum(adv)) <= len(adv) * np.spacing(max(1.0, np.abs(adv).max()))


# -- policy and sampling -----------------------------------------------------


def test_greedy_sampling_is_identical():
    pol = ToyPolicy.with_skeleton_prior(2, 8)
    pol.theta[pol.state(0, 4, TOK["<answer>"]), TOK["B"]] += 1
    group = sample_group(pol, "q", 0, 5, seed=1, temperature=0)
    assert len({ro.text for ro in group}) == 1
    assert group[0].text == "<think>x</think><answer>B</answer>"
    assert group[0].tokens[-1] == EOS


def test_sampling_deterministic_and_logprobs_audited():
    rng = np.random.default_rng(3)
    pol = ToyPolicy(3, 6, rng.normal(0, 2, ToyPolicy.zeros(3, 6).theta.shape))
    a = sample_group(pol, "q1", 2, 10, seed=9)
    b = sample_group(pol, "q1", 2, 10, seed=9)
    assert [ro.tokens.tolist() for ro in a] == [ro.tokens.tolist() for ro in b]
    for ro in a:
        assert 1 <= len(ro) <= 6
        lsm = log_softmax(pol.theta[ro.rows])
        recomputed = lsm[np.arange(len(ro)), ro.tokens]
        assert np.max(np.abs(recomputed - ro.logp)) <= 1e-12
        np.testing.assert_array_equal(ro.logp, ro.logp_ref)


def test_importance_ratios():
    assert importance_ratios(np.array([-1.0, -2.0]), np.array([-1.0, -2.0])).tolist() == [1.0, 1.0]
    pol = ToyPolicy.zeros(1, 2)
    ref = pol.copy()
    pol.theta[0, 0] += 0.7
    rows, toks = np.array([0]), np.array([0])
    lp, lr = pol.log_probs(rows, toks), ref.log_probs(rows, toks)
    manual = 0.7 - math.log(math.exp(0.7) + 8) + math.log(9)
    assert abs(importance_ratios(lp, lr)[0] - math.exp(manual)) <= 1e-12


@settings(max_examples=200, deadline=None)
@given(st.floats(-30, 30), st.floats(-30, 30), st.floats(-5, 5))
def test_ratio_positive_and_clip_bound(lp, lr, adv):
    r = importance_ratios(np.array([lp]), np.array([lr]))
    assert r[0] > 0 or lp - lr < -700
    s = clipped_surrogate(r, np.array([adv]), 0.2)[0]
    assert s <= max(r[0], 1.2) * abs(adv) + 1e-12


# -- losses -------------------------------------------------------------------


def test_loss_at_reference_is_token_weighted_advantage():
    rng = np.random.default_rng(0)
    pol, batch = random_batch(rng, 3)
    flat = [ro for g in batch.groups for ro in g]
    for ro in flat:
        ro.logp_ref = pol.log_probs(ro.rows, ro.tokens)
    batch = GroupBatch.build(batch.groups, 1e-4)
    want = sum(len(ro) * ro.advantage for ro in flat) / sum(len(ro) for ro in flat)
    assert abs(bnpo_loss(pol, batch).value - want) <= 1e-12


def test_zero_advantage_gives_zero_loss_and_grad():
    rng = np.random.default_rng(1)
    pol, batch = random_batch(rng, 2)
    for g in batch.groups:
        for ro in g:
            ro.reward = 1.0
    batch = GroupBatch.build(batch.groups)
    res = bnpo_loss(pol, batch)
    assert res.value == 0 and not res.grad.any()


def test_empty_and_malformed_batches():
    with pytest.raises(BatchError):
        GroupBatch.build([])
    rng = np.random.default_rng(2)
    _, batch = random_batch(rng, 1)
    with pytest.raises(BatchError):
        GroupBatch.build([batch.groups[0][:1]])


def test_batch_check_detects_stale_stats():
    rng = np.random.default_rng(4)
    _, batch = random_batch(rng, 2)
    batch.check()
    batch.groups[1][0].reward += 1
    with pytest.raises(BatchError):
        batch.check()


def test_dapo_equals_bnpo_single_group_and_rejects_many():
    rng = np.random.default_rng(5)
    for _ in range(50):
        pol, batch = random_batch(rng, 1, G=int(rng.integers(2, 8)))
        assert dapo_loss(pol, batch) == bnpo_loss(pol, batch).value
    pol, batch = random_batch(rng, 2)
    with pytest.raises(BatchError):
        dapo_loss(pol, batch)


def test_value_depends_on_ratios_only():
    rng = np.random.default_rng(6)
    pol, batch = random_batch(rng, 2)
    base = bnpo_loss(pol, batch).value
    # shift each row of θ by a constant: π_θ is unchanged, so the ratios are too
    shifted = pol.theta + rng.normal(0, 3, (pol.n_states, 1))
    assert abs(bnpo_loss(shifted, batch).value - base) <= 1e-12


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(20):
        pol, batch = random_batch(rng, 3)
        g = bnpo_loss(pol, batch).grad
        fd = finite_difference_grad(pol.theta, batch)
        worst = max(worst, relative_error(g, fd))
    assert worst <= 1e-5


# -- training ----------------------------------------------------------------


def test_lr_zero_is_noop():
    task = make_toy_task(60, 10, seed=1)
    cfg = TrainerConfig(lr=0.0)
    res = train(task.train, config=cfg)
    init = ToyPolicy.with_skeleton_prior(cfg.n_ctx, cfg.max_len, cfg.prior_strength)
    np.testing.assert_array_equal(res.policy.theta, init.theta)
    assert len(res.metrics) == 6


def test_config_guards():
    with pytest.raises(ValueError):
        TrainerConfig(eps_clip=1.0)
    with pytest.raises(ValueError):
        TrainerConfig(G=1)
    with pytest.raises(NotImplementedError):
        TrainerConfig(beta=0.1)


def test_small_training_improves_and_is_deterministic(tmp_path):
    task = make_toy_task(400, 100, seed=2)
    cfg = TrainerConfig(seed=2)
    a = train(task.train, config=cfg)
    b = train(task.train, config=cfg)
    np.testing.assert_array_equal(a.policy.theta, b.policy.theta)
    init = ToyPolicy.with_skeleton_prior(cfg.n_ctx, cfg.max_len, cfg.prior_strength)
    before = evaluate(init, task.test, seed=2)
    after = evaluate(a.policy, task.test, seed=2)
    assert after["mean_reward"] > before["mean_reward"]
    assert after["accuracy"] > before["accuracy"] + 0.2

    ck = tmp_path / "policy.bin"
    save_policy(ck, a.policy, cfg.seed)
    loaded, header = load_policy(ck)
    np.testing.assert_array_equal(loaded.theta, a.policy.theta)
    assert header["seed"] == 2
    write_metrics(tmp_path / "m.tsv", a.metrics)
    lines = (tmp_path / "m.tsv").read_text().splitlines()
    assert lines[0] == "step\tmean_reward\taccuracy\tloss" and len(lines) == 41
