"""Clipped-surrogate policy optimization.

The loss is assembled from three terms: the negated clipped surrogate, a
regression loss per critic, and an entropy bonus. One gradient routine backs
both :func:`ppo_update` and the pure :func:`total_loss` used by the
finite-difference checks, so what the tests verify is what training runs.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import nets
from .errors import NonFiniteError, ShapeError
from .nets import (
    AdamState,
    CategoricalPolicyHead,
    GaussianPolicyHead,
    Mlp,
    adam_update,
    backward_from_trace,
    forward_trace,
)

# exp() of log-ratio differences is clamped here; anything above means the new
# policy has drifted absurdly far from the sampling policy.
RATIO_EXP_MAX = 60.0


class OverflowCounter:
    """Counts probability-ratio overflows clamped to a finite value."""

    def __init__(self):
        self.count = 0


ratio_overflows = OverflowCounter()


@dataclass
class PpoConfig:
    clip_epsilon: float = 0.2
    entropy_beta: float = 5e-3
    value_loss_coeff: float = 0.5
    epochs: int = 3
    minibatch_size: int = 1024
    learning_rate: float = 3e-4

    def __post_init__(self):
        if not 0.0 < self.clip_epsilon < 1.0:
            raise ValueError(f"clip_epsilon must be in (0,1), got {self.clip_epsilon}")
        if self.entropy_beta < 0.0:
            raise ValueError("entropy_beta must be non-negative")
        if self.value_loss_coeff <= 0.0:
            raise ValueError("value_loss_coeff must be positive")
        if self.epochs < 1 or self.minibatch_size < 1:
            raise ValueError("epochs and minibatch_size must be positive")
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive")


@dataclass
class UpdateBatch:
    """Aligned per-transition training data for one update.

    ``value_targets`` holds one target series per critic binding, each the
    full batch length; bindings that train on a row subset index into it.
    """

    states: np.ndarray
    actions: np.ndarray
    log_probs_old: np.ndarray
    advantages: np.ndarray
    value_targets: list[np.ndarray]

    def __post_init__(self):
        n = len(self.states)
        if n == 0:
            raise ShapeError("update batch must be non-empty")
        for name in ("actions", "log_probs_old", "advantages"):
            if len(getattr(self, name)) != n:
                raise ShapeError(f"{name} length != states length")
        for i, t in enumerate(self.value_targets):
            if len(t) != n:
                raise ShapeError(f"value_targets[{i}] length != states length")

    def __len__(self) -> int:
        return len(self.states)


@dataclass
class CriticBinding:
    """One value network's view of the batch.

    ``inputs`` are the critic's own observations aligned with the full batch;
    ``head`` selects an output unit per row (multi-head value nets);
    ``row_mask`` restricts training to a row subset (None trains on all rows).
    """

    name: str
    net: Mlp
    adam: AdamState
    inputs: np.ndarray
    head: np.ndarray | None = None
    row_mask: np.ndarray | None = None


@dataclass
class UpdateDiagnostics:
    policy_loss: float
    value_loss: float
    entropy: float
    ratio_overflow_count: int


def probability_ratio(log_prob_new: float, log_prob_old: float) -> float:
    """exp(new - old), clamped to a large finite value on overflow."""
    return float(_ratios(np.asarray([log_prob_new - log_prob_old]))[0])


def _ratios(log_diff: np.ndarray) -> np.ndarray:
    over = log_diff > RATIO_EXP_MAX
    if np.any(over):
        ratio_overflows.count += int(over.sum())
        log_diff = np.where(over, RATIO_EXP_MAX, log_diff)
    return np.exp(log_diff)


def clipped_surrogate(ratio: float, advantage: float, clip_epsilon: float) -> float:
    """min of the raw and clip-bounded importance-weighted advantage."""
    if not 0.0 < clip_epsilon < 1.0:
        raise ValueError("clip_epsilon must be in (0,1)")
    clipped = min(max(ratio, 1.0 - clip_epsilon), 1.0 + clip_epsilon)
    return min(ratio * advantage, clipped * advantage)


def value_loss(predicted, targets) -> float:
    """Half mean squared error between predictions and regression targets."""
    predicted = np.asarray(predicted, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if predicted.shape != targets.shape:
        raise ShapeError("predicted/targets length mismatch")
    diff = predicted - targets
    return float(0.5 * np.mean(diff * diff))


# ---------------------------------------------------------------------------
# Actor parameter plumbing
# ---------------------------------------------------------------------------

def actor_params(actor) -> list[np.ndarray]:
    if isinstance(actor, GaussianPolicyHead):
        return nets.mlp_params(actor.mean_net) + [actor.log_std]
    return nets.mlp_params(actor.logit_net)


def actor_with_params(actor, params: list[np.ndarray]):
    if isinstance(actor, GaussianPolicyHead):
        net = nets.mlp_with_params(actor.mean_net, params[:-1])
        return GaussianPolicyHead(net, params[-1])
    return CategoricalPolicyHead(nets.mlp_with_params(actor.logit_net, params))


# ---------------------------------------------------------------------------
# Loss + gradients (single source for updates and gradient checks)
# ---------------------------------------------------------------------------

def _policy_terms(actor, states, actions, log_probs_old, advantages, cfg: PpoConfig):
    """Policy surrogate + entropy terms and their actor-parameter gradients.

    Returns (policy_loss, entropy_mean, actor_grads) where the grads already
    include the entropy-bonus contribution.
    """
    B = len(states)
    if isinstance(actor, GaussianPolicyHead):
        mean, trace = forward_trace(actor.mean_net, states)
        inv_std = np.exp(-actor.log_std)
        z = (np.asarray(actions) - mean) * inv_std
        lpn = (-0.5 * np.log(2.0 * np.pi) - actor.log_std - 0.5 * z * z).sum(axis=1)
        entropy_per_row = np.full(B, nets.gaussian_entropy(actor.log_std))
    elif isinstance(actor, CategoricalPolicyHead):
        logits, trace = forward_trace(actor.logit_net, states)
        logp = nets.log_softmax(logits)
        probs = np.exp(logp)
        acts = np.asarray(actions, dtype=int)
        lpn = logp[np.arange(B), acts]
        entropy_per_row = -(probs * logp).sum(axis=1)
    else:
        raise TypeError(f"unsupported actor {type(actor).__name__}")

    ratios = _ratios(lpn - np.asarray(log_probs_old))
    adv = np.asarray(advantages)
    surr_raw = ratios * adv
    clipped = np.clip(ratios, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon)
    surr_clip = clipped * adv
    take_raw = surr_raw <= surr_clip
    policy_loss = -float(np.mean(np.where(take_raw, surr_raw, surr_clip)))
    entropy_mean = float(entropy_per_row.mean())

    # d(policy_loss)/d(log pi_new): the min picks the raw branch or, when the
    # clipped branch wins, only passes gradient while the clip is inactive.
    in_range = (ratios > 1.0 - cfg.clip_epsilon) & (ratios < 1.0 + cfg.clip_epsilon)
    active = take_raw | in_range
    g_lpn = np.where(active, -ratios * adv / B, 0.0)

    if isinstance(actor, GaussianPolicyHead):
        mean_grad = g_lpn[:, None] * (z * inv_std)
        log_std_grad = (g_lpn[:, None] * (z * z - 1.0)).sum(axis=0)
        log_std_grad = log_std_grad - cfg.entropy_beta  # d(-beta*H)/d log_std
        net_grads, _ = backward_from_trace(actor.mean_net, trace, mean_grad)
        grads = net_grads + [log_std_grad]
    else:
        onehot = np.zeros_like(probs)
        onehot[np.arange(B), acts] = 1.0
        out_grad = g_lpn[:, None] * (onehot - probs)
        # d(-beta*mean(H))/d logits = (beta/B) * p * (log p + H)
        out_grad += (cfg.entropy_beta / B) * probs * (logp + entropy_per_row[:, None])
        grads, _ = backward_from_trace(actor.logit_net, trace, out_grad)
    return policy_loss, entropy_mean, grads


def _critic_terms(binding: CriticBinding, targets: np.ndarray, rows: np.ndarray, coeff: float):
    """Half-MSE on the binding's rows plus coefficient-scaled net gradients."""
    inputs = binding.inputs[rows]
    n = len(rows)
    preds, trace = forward_trace(binding.net, inputs)
    head = (
        np.zeros(n, dtype=int)
        if binding.head is None
        else np.asarray(binding.head)[rows]
    )
    v = preds[np.arange(n), head]
    t = targets[rows]
    diff = v - t
    raw_loss = float(0.5 * np.mean(diff * diff))
    out_grad = np.zeros_like(preds)
    out_grad[np.arange(n), head] = coeff * diff / n
    grads, _ = backward_from_trace(binding.net, trace, out_grad)
    return raw_loss, grads


def _binding_rows(binding: CriticBinding, rows: np.ndarray) -> np.ndarray:
    if binding.row_mask is None:
        return rows
    return rows[binding.row_mask[rows]]


def total_loss(actor, critics: list[CriticBinding], batch: UpdateBatch, cfg: PpoConfig) -> float:
    """Full training loss on the whole batch without updating anything."""
    rows = np.arange(len(batch))
    pol, ent, _ = _policy_terms(
        actor, batch.states, batch.actions, batch.log_probs_old, batch.advantages, cfg
    )
    vtotal = 0.0
    for i, c in enumerate(critics):
        sub = _binding_rows(c, rows)
        if len(sub) == 0:
            continue
        raw, _ = _critic_terms(c, np.asarray(batch.value_targets[i]), sub, cfg.value_loss_coeff)
        vtotal += raw
    return pol + cfg.value_loss_coeff * vtotal - cfg.entropy_beta * ent


def ppo_update(
    actor,
    actor_adam: AdamState,
    critics: list[CriticBinding],
    batch: UpdateBatch,
    cfg: PpoConfig,
    rng: np.random.Generator,
):
    """Epochs of shuffled minibatch Adam steps on actor and critics.

    Returns ``(actor, actor_adam, critics, diagnostics)`` with fresh
    parameter arrays; inputs are left untouched. Raises
    :class:`NonFiniteError` if any loss or gradient goes non-finite.
    """
    if len(batch.value_targets) != len(critics):
        raise ShapeError("one value_targets series per critic binding required")
    for c in critics:
        if len(c.inputs) != len(batch):
            raise ShapeError(f"critic {c.name!r} inputs not aligned with batch")
    B = len(batch)
    overflow_before = ratio_overflows.count
    pol_losses, val_losses, entropies = [], [], []
    targets = [np.asarray(t, dtype=np.float64) for t in batch.value_targets]
    critics = list(critics)

    for _ in range(cfg.epochs):
        perm = rng.permutation(B)
        for start in range(0, B, cfg.minibatch_size):
            mb = perm[start : start + cfg.minibatch_size]
            pol, ent, agrads = _policy_terms(
                actor,
                batch.states[mb],
                np.asarray(batch.actions)[mb],
                np.asarray(batch.log_probs_old)[mb],
                np.asarray(batch.advantages)[mb],
                cfg,
            )
            if not np.isfinite(pol):
                raise NonFiniteError(f"policy loss became non-finite ({pol})")
            new_params, actor_adam = adam_update(actor_params(actor), agrads, actor_adam)
            actor = actor_with_params(actor, new_params)
            if isinstance(actor, GaussianPolicyHead):
                actor = GaussianPolicyHead(actor.mean_net, nets.clamp_log_std(actor.log_std))

            vtotal = 0.0
            for i, c in enumerate(critics):
                sub = _binding_rows(c, mb)
                if len(sub) == 0:
                    continue
                raw, cgrads = _critic_terms(c, targets[i], sub, cfg.value_loss_coeff)
                if not np.isfinite(raw):
                    raise NonFiniteError(f"value loss for {c.name!r} non-finite")
                cparams, cadam = adam_update(nets.mlp_params(c.net), cgrads, c.adam)
                critics[i] = replace(c, net=nets.mlp_with_params(c.net, cparams), adam=cadam)
                vtotal += raw
            pol_losses.append(pol)
            val_losses.append(vtotal)
            entropies.append(ent)

    diag = UpdateDiagnostics(
        policy_loss=float(np.mean(pol_losses)),
        value_loss=float(np.mean(val_losses)),
        entropy=float(np.mean(entropies)),
        ratio_overflow_count=ratio_overflows.count - overflow_before,
    )
    return actor, actor_adam, critics, diag
