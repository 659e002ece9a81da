"""Single-epoch BNPO training loop for the toy policy."""

from __future__ import annotations

import json
import logging
from collections.abc import Callable, Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..io import atomic_write_bytes, write_table
from ..qa.items import QAItem
from ..rewards import RewardVector, total_reward
from ..seeding import derive_seed, rng_for
from .bnpo import GroupBatch, bnpo_loss
from .policy import VOCAB, ToyPolicy, prompt_context, sample_group

log = logging.getLogger(__name__)

Verifier = Callable[[str, QAItem], RewardVector]


@dataclass
class TrainerConfig:
    G: int = 10
    N: int = 10
    eps_clip: float = 0.2
    eps_std: float = 1e-4
    beta: float = 0.0
    lr: float = 10.0
    max_len: int = 8
    epochs: int = 1
    seed: int = 0
    n_ctx: int = 8
    prior_strength: float = 10.0
    eval_samples: int = 8

    def __post_init__(self) -> None:
        if not 0 < self.eps_clip < 1:
            raise ValueError("eps_clip must lie in (0, 1)")
        if self.eps_std < 0:
            raise ValueError("eps_std must be non-negative")
        if self.G < 2 or self.N < 1:
            raise ValueError("need G >= 2 and N >= 1")
        if self.beta != 0:
            raise NotImplementedError("the KL term is not implemented; beta must be 0")
        if self.epochs < 1 or self.max_len < 1:
            raise ValueError("epochs and max_len must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> TrainerConfig:
        return cls(**d)


@dataclass
class TrainResult:
    policy: ToyPolicy
    metrics: list[dict] = field(default_factory=list)


def rollouts_for(
    policy: ToyPolicy,
    item: QAItem,
    G: int,
    seed: int,
    verifier: Verifier = total_reward,
    reference: ToyPolicy | None = None,
):
    group = sample_group(policy, item.id, prompt_context(item, policy.n_ctx), G, seed, reference)
    for ro in group:
        rv = verifier(ro.text, item)
        ro.reward, ro.correct = rv.total, rv.correct
    return group


def evaluate(policy: ToyPolicy, items: Sequence[QAItem], k: int = 8, seed: int = 0, verifier: Verifier = total_reward) -> dict:
    """Mean correctness and reward over k sampled completions per item."""
    correct, reward = [], []
    for it in items:
        for ro in rollouts_for(policy, it, k, derive_seed("eval", seed), verifier):
            correct.append(ro.correct)
            reward.append(ro.reward)
    return {"accuracy": float(np.mean(correct)), "mean_reward": float(np.mean(reward))}


def train(
    dataset: Sequence[QAItem],
    verifier: Verifier = total_reward,
    config: TrainerConfig | None = None,
    policy: ToyPolicy | None = None,
) -> TrainResult:
    """One ascent step per batch of N prompts; the reference is the pre-step policy."""
    cfg = config or TrainerConfig()
    if not dataset:
        raise ValueError("empty dataset")
    pol = policy.copy() if policy is not None else ToyPolicy.with_skeleton_prior(cfg.n_ctx, cfg.max_len, cfg.prior_strength)
    metrics = []
    step = 0
    for epoch in range(cfg.epochs):
        order = rng_for(cfg.seed, "order", epoch).permutation(len(dataset))
        for start in range(0, len(order), cfg.N):
            chunk = [dataset[j] for j in order[start : start + cfg.N]]
            ref = pol.copy()
            seed = derive_seed(cfg.seed, "step", step)
            groups = [rollouts_for(pol, it, cfg.G, seed, verifier, ref) for it in chunk]
            batch = GroupBatch.build(groups, cfg.eps_std)
            res = bnpo_loss(pol, batch, cfg.eps_clip)
            pol.theta += cfg.lr * res.grad
            flat = [ro for g in groups for ro in g]
            metrics.append(
                {
                    "step": step,
                    "mean_reward": float(np.mean([ro.reward for ro in flat])),
                    "accuracy": float(np.mean([ro.correct for ro in flat])),
                    "loss": res.value,
                }
            )
            if step % 50 == 0:
                log.info("step %d reward %.3f acc %.3f", step, metrics[-1]["mean_reward"], metrics[-1]["accuracy"])
            step += 1
    return TrainResult(pol, metrics)


def write_metrics(path: str | Path, metrics: Sequence[dict]) -> None:
    cols = ("step", "mean_reward", "accuracy", "loss")
    write_table(path, cols, ([m[c] if c == "step" else repr(m[c]) for c in cols] for m in metrics))


def save_policy(path: str | Path, policy: ToyPolicy, seed: int) -> None:
    """One JSON header line, then the raw little-endian float64 tensor."""
    header = {
        "shape": list(policy.theta.shape),
        "n_ctx": policy.n_ctx,
        "max_len": policy.max_len,
        "vocab": list(VOCAB),
        "seed": seed,
        "dtype": "<f8",
    }
    atomic_write_bytes(path, json.dumps(header, sort_keys=True).encode() + b"\n" + policy.theta.astype("<f8").tobytes())


def load_policy(path: str | Path) -> tuple[ToyPolicy, dict]:
    data = Path(path).read_bytes()
    nl = data.index(b"\n")
    header = json.loads(data[:nl])
    if header["vocab"] != list(VOCAB):
        raise ValueError("checkpoint vocabulary does not match")
    theta = np.frombuffer(data[nl + 1 :], dtype="<f8").reshape(header["shape"]).copy()
    return ToyPolicy(header["n_ctx"], header["max_len"], theta), header


def config_dict(cfg: TrainerConfig) -> dict:
    return asdict(cfg)


def sample_completions(policy: ToyPolicy, items: Sequence[QAItem], seed: int = 0) -> list[dict]:
    """One sampled completion per item as ``{item_id, text}`` records."""
    out = []
    for it in items:
        ro = sample_group(policy, it.id, prompt_context(it, policy.n_ctx), 1, derive_seed("complete", seed))[0]
        out.append({"item_id": it.id, "text": ro.text})
    return out
