"""Group advantages and the batch-normalized clipped surrogate.

The objective is

    J(θ) = (1 / Σ|o|) Σ_n Σ_i Σ_t min(r Â, clip(r, 1-ε, 1+ε) Â)

with r = π_θ(token) / π_ref(token) and Â the group-normalized reward. The
DAPO variant divides by one group's token count instead, so the two agree
exactly whenever the batch holds a single prompt group.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .policy import Rollout, ToyPolicy, log_softmax


class BatchError(ValueError):
    pass


def _group_moments(rewards) -> tuple[Fraction, Fraction]:
    """Exact mean and population variance of float rewards."""
    fr = [Fraction(float(r)) for r in rewards]
    mu = sum(fr, Fraction(0)) / len(fr)
    var = sum(((x - mu) ** 2 for x in fr), Fraction(0)) / len(fr)
    return mu, var


def group_advantages(rewards, eps_std: float = 1e-4) -> np.ndarray:
    """(R - μ) / (σ + ε_std) with the population standard deviation.

    Centering happens in exact rational arithmetic. With ε_std = 0 each
    advantage is sign(d)·sqrt(d²/σ²) rounded once from an exact ratio, so a
    positive affine map of the rewards (exact in floating point) returns
    bit-identical advantages.
    """
    if len(rewards) < 2:
        raise BatchError("a group needs at least two rewards")
    if eps_std < 0:
        raise BatchError("eps_std must be non-negative")
    mu, var = _group_moments(rewards)
    fr = [Fraction(float(r)) - mu for r in rewards]
    if var == 0:
        return np.zeros(len(fr))
    if eps_std == 0:
        return np.array([math.copysign(math.sqrt(float(d * d / var)), d) if d else 0.0 for d in fr])
    sigma = math.sqrt(float(var))
    return np.array([float(d) / (sigma + eps_std) for d in fr])


def importance_ratios(logp: np.ndarray, logp_ref: np.ndarray) -> np.ndarray:
    return np.exp(np.asarray(logp) - np.asarray(logp_ref))


def clipped_surrogate(ratio: np.ndarray, adv: np.ndarray, eps_clip: float) -> np.ndarray:
    """Per-token min(r Â, clip(r) Â)."""
    return np.minimum(ratio * adv, np.clip(ratio, 1 - eps_clip, 1 + eps_clip) * adv)


@dataclass
class GroupBatch:
    """N prompt groups of G rollouts, flattened to token arrays in a fixed order."""

    groups: list[list[Rollout]]
    mu: list[float]
    sigma: list[float]
    eps_std: float
    rows: np.ndarray
    toks: np.ndarray
    logp_ref: np.ndarray
    adv: np.ndarray  # per token
    group_of: np.ndarray  # per token
    n_tokens: int

    @classmethod
    def build(cls, groups: list[list[Rollout]], eps_std: float = 1e-4) -> GroupBatch:
        if not groups:
            raise BatchError("empty batch")
        mus, sigmas = [], []
        for g in groups:
            if len(g) < 2:
                raise BatchError("G must be at least 2")
            if any(len(ro) < 1 for ro in g):
                raise BatchError("rollouts must have at least one token")
            rewards = [ro.reward for ro in g]
            for ro, a in zip(g, group_advantages(rewards, eps_std)):
                ro.advantage = float(a)
            mu, var = _group_moments(rewards)
            mus.append(float(mu))
            sigmas.append(math.sqrt(float(var)))
        flat = [ro for g in groups for ro in g]
        gid = np.concatenate([np.full(len(ro), n) for n, g in enumerate(groups) for ro in g])
        return cls(
            groups=groups,
            mu=mus,
            sigma=sigmas,
            eps_std=eps_std,
            rows=np.concatenate([ro.rows for ro in flat]),
            toks=np.concatenate([ro.tokens for ro in flat]),
            logp_ref=np.concatenate([ro.logp_ref for ro in flat]),
            adv=np.concatenate([np.full(len(ro), ro.advantage) for ro in flat]),
            group_of=gid,
            n_tokens=sum(len(ro) for ro in flat),
        )

    def check(self) -> None:
        """Recompute group statistics from the stored rewards."""
        for n, g in enumerate(self.groups):
            mu, var = _group_moments([ro.reward for ro in g])
            if float(mu) != self.mu[n] or math.sqrt(float(var)) != self.sigma[n]:
                raise BatchError(f"group {n}: cached statistics are stale")


@dataclass
class LossResult:
    value: float
    grad: np.ndarray


def _surrogate_and_grad(
    theta: np.ndarray,
    rows: np.ndarray,
    toks: np.ndarray,
    logp_ref: np.ndarray,
    adv: np.ndarray,
    eps_clip: float,
    normalizer: float,
    want_grad: bool = True,
) -> LossResult:
    lsm = log_softmax(theta[rows])
    logp = lsm[np.arange(len(rows)), toks]
    r = importance_ratios(logp, logp_ref)
    s = clipped_surrogate(r, adv, eps_clip)
    value = float(s.sum()) / normalizer
    if not want_grad:
        return LossResult(value, np.zeros(0))
    # the unclipped arm carries gradient unless the clip arm is the strict minimum
    active = ~(((adv > 0) & (r > 1 + eps_clip)) | ((adv < 0) & (r < 1 - eps_clip)))
    coef = np.where(active, adv * r, 0.0) / normalizer
    # d log π(tok) / d θ[row] = onehot(tok) - softmax(θ[row])
    local = -np.exp(lsm) * coef[:, None]
    local[np.arange(len(rows)), toks] += coef
    grad = np.zeros_like(theta)
    np.add.at(grad, rows, local)
    return LossResult(value, grad)


def bnpo_loss(policy: ToyPolicy | np.ndarray, batch: GroupBatch, eps_clip: float = 0.2, want_grad: bool = True) -> LossResult:
    """Surrogate value and its analytic gradient w.r.t. θ (reference held fixed).

    This is the quantity maximized; the trainer steps along +grad.
    """
    if batch.n_tokens == 0:
        raise BatchError("empty batch")
    theta = policy.theta if isinstance(policy, ToyPolicy) else policy
    return _surrogate_and_grad(theta, batch.rows, batch.toks, batch.logp_ref, batch.adv, eps_clip, batch.n_tokens, want_grad)


def dapo_loss(policy: ToyPolicy | np.ndarray, batch: GroupBatch, eps_clip: float = 0.2) -> float:
    """Token-level surrogate normalized by the single group's own token count."""
    if len(batch.groups) != 1:
        raise BatchError("dapo_loss takes exactly one prompt group")
    theta = policy.theta if isinstance(policy, ToyPolicy) else policy
    group_tokens = sum(len(ro) for ro in batch.groups[0])
    return _surrogate_and_grad(
        theta, batch.rows, batch.toks, batch.logp_ref, batch.adv, eps_clip, group_tokens, want_grad=False
    ).value


def finite_difference_grad(
    theta: np.ndarray, batch: GroupBatch, eps_clip: float = 0.2, h: float = 1e-6, rows: np.ndarray | None = None
) -> np.ndarray:
    """Central differences of the surrogate; only the listed rows are probed."""
    fd = np.zeros_like(theta)
    probe = np.unique(batch.rows) if rows is None else rows
    th = theta.copy()
    for r in probe:
        for k in range(theta.shape[1]):
            old = th[r, k]
            th[r, k] = old + h
            up = bnpo_loss(th, batch, eps_clip, want_grad=False).value
            th[r, k] = old - h
            dn = bnpo_loss(th, batch, eps_clip, want_grad=False).value
            th[r, k] = old
            fd[r, k] = (up - dn) / (2 * h)
    return fd


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """||a - b|| / max(||a||, ||b||), zero when both vanish."""
    den = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if den == 0 else float(np.linalg.norm(a - b) / den)
