"""Tabular autoregressive softmax policy over a tiny tag vocabulary.

The context state is (prompt context, position, previous token). The prompt
context is a small integer summary of the prompt; the toy task exposes its
planted cue there, other items fall back to a hash of the prompt id.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..seeding import derive_seed

VOCAB = ("<think>", "</think>", "<answer>", "</answer>", "A", "B", "x", "y", "<eos>")
TOK = {t: i for i, t in enumerate(VOCAB)}
EOS = TOK["<eos>"]
BOS = len(VOCAB)  # "previous token" slot at position 0

# skeleton prior: preferred successors of each previous token
_SKELETON = {
    BOS: ("<think>",),
    TOK["<think>"]: ("x",),
    TOK["x"]: ("</think>",),
    TOK["y"]: ("</think>",),
    TOK["</think>"]: ("<answer>",),
    TOK["<answer>"]: ("A", "B"),
    TOK["A"]: ("</answer>",),
    TOK["B"]: ("</answer>",),
    TOK["</answer>"]: ("<eos>",),
}


def log_softmax(x: np.ndarray) -> np.ndarray:
    m = x.max(axis=-1, keepdims=True)
    z = x - m
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def decode(tokens) -> str:
    return "".join(VOCAB[t] for t in tokens if t != EOS)


@dataclass
class ToyPolicy:
    n_ctx: int
    max_len: int
    theta: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        want = (self.n_ctx * self.max_len * (len(VOCAB) + 1), len(VOCAB))
        if self.theta.shape != want:
            raise ValueError(f"theta has shape {self.theta.shape}, expected {want}")
        if not np.all(np.isfinite(self.theta)):
            raise ValueError("theta has non-finite entries")

    @classmethod
    def zeros(cls, n_ctx: int, max_len: int) -> ToyPolicy:
        return cls(n_ctx, max_len, np.zeros((n_ctx * max_len * (len(VOCAB) + 1), len(VOCAB))))

    @classmethod
    def with_skeleton_prior(cls, n_ctx: int, max_len: int, strength: float = 10.0) -> ToyPolicy:
        """Format-competent start: the tag skeleton is near-certain, A and B are tied."""
        pol = cls.zeros(n_ctx, max_len)
        for c in range(n_ctx):
            for pos in range(max_len):
                for prev, nxt in _SKELETON.items():
                    row = pol.state(c, pos, prev)
                    for t in nxt:
                        pol.theta[row, TOK[t]] = strength
        return pol

    @property
    def n_states(self) -> int:
        return self.theta.shape[0]

    def state(self, ctx: int, pos: int, prev: int) -> int:
        return (ctx * self.max_len + pos) * (len(VOCAB) + 1) + prev

    def copy(self) -> ToyPolicy:
        return ToyPolicy(self.n_ctx, self.max_len, self.theta.copy())

    def log_probs(self, rows: np.ndarray, toks: np.ndarray) -> np.ndarray:
        return log_softmax(self.theta[rows])[np.arange(len(rows)), toks]


def prompt_context(item, n_ctx: int) -> int:
    """Bounded prompt summary: the planted cue if present, else a hash of the id."""
    cue = item.metadata.get("cue") if hasattr(item, "metadata") else None
    if cue is not None:
        return int(cue) % n_ctx
    return derive_seed("ctx", item.id) % n_ctx


@dataclass
class Rollout:
    prompt_id: str
    tokens: np.ndarray
    rows: np.ndarray
    logp: np.ndarray
    logp_ref: np.ndarray
    text: str
    reward: float = 0.0
    correct: float = 0.0
    advantage: float = 0.0

    def __len__(self) -> int:
        return len(self.tokens)


def sample_group(
    policy: ToyPolicy,
    prompt_id: str,
    ctx: int,
    G: int,
    seed: int,
    reference: ToyPolicy | None = None,
    temperature: float = 1.0,
) -> list[Rollout]:
    """G independent rollouts; temperature 0 decodes greedily."""
    if G < 1:
        raise ValueError("G must be positive")
    rng = np.random.default_rng(derive_seed("rollout", seed, prompt_id))
    ref = reference or policy
    L = policy.max_len
    toks = np.full((G, L), -1, dtype=np.int64)
    rows = np.full((G, L), -1, dtype=np.int64)
    prev = np.full(G, BOS, dtype=np.int64)
    alive = np.ones(G, dtype=bool)
    for pos in range(L):
        if not alive.any():
            break
        r = np.array([policy.state(ctx, pos, p) for p in prev])
        logits = policy.theta[r]
        if temperature == 0:
            choice = logits.argmax(axis=1)
        else:
            p = np.exp(log_softmax(logits / temperature))
            u = rng.random(G)
            choice = np.minimum((p.cumsum(axis=1) < u[:, None]).sum(axis=1), len(VOCAB) - 1)
        choice = np.where(alive, choice, -1)
        toks[:, pos] = choice
        rows[:, pos] = np.where(alive, r, -1)
        prev = np.where(alive, choice, prev)
        alive &= choice != EOS
    out = []
    for g in range(G):
        keep = toks[g] >= 0
        t, rw = toks[g][keep], rows[g][keep]
        out.append(Rollout(prompt_id, t, rw, policy.log_probs(rw, t), ref.log_probs(rw, t), decode(t)))
    return out
