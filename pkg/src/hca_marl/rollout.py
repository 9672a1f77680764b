"""Trajectories and advantage estimation.

Transitions carry one value estimate per critic (local critic first). The
estimators here operate on a single value series; the critic-fusion layer
reduces multi-critic trajectories to that form before calling in.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError


@dataclass
class Transition:
    """One agent step: observation(s), action, reward, and critic values."""

    state: np.ndarray
    manager_states: list[np.ndarray]
    action: np.ndarray | int
    log_prob_old: float
    reward: float
    done: bool
    value_estimates: np.ndarray  # (m,), local critic first

    def __post_init__(self):
        self.value_estimates = np.asarray(self.value_estimates, dtype=np.float64)
        if self.value_estimates.ndim != 1 or self.value_estimates.size < 1:
            raise ShapeError("value_estimates must be a non-empty 1-D array")
        if len(self.manager_states) != self.value_estimates.size - 1:
            raise ShapeError(
                "manager_states length must be value_estimates length - 1"
            )


@dataclass
class Trajectory:
    """A contiguous run of transitions for one agent.

    Only the final transition may be terminal; ``bootstrap_values`` holds the
    per-critic value of the state after the last transition (zeros when that
    transition ended the episode).
    """

    transitions: list[Transition]
    bootstrap_values: np.ndarray

    def __post_init__(self):
        self.bootstrap_values = np.asarray(self.bootstrap_values, dtype=np.float64)
        if any(t.done for t in self.transitions[:-1]):
            raise ShapeError("only the final transition may have done=True")
        if self.transitions and self.bootstrap_values.size != self.transitions[0].value_estimates.size:
            raise ShapeError("bootstrap_values length must equal critic count")

    def __len__(self) -> int:
        return len(self.transitions)

    @property
    def critic_count(self) -> int:
        return int(self.bootstrap_values.size)

    def rewards(self) -> np.ndarray:
        return np.array([t.reward for t in self.transitions], dtype=np.float64)

    def dones(self) -> np.ndarray:
        return np.array([t.done for t in self.transitions], dtype=bool)

    def value_matrix(self) -> np.ndarray:
        """(T, m) matrix of recorded per-critic value estimates."""
        return np.stack([t.value_estimates for t in self.transitions])


@dataclass
class AdvantageConfig:
    gamma: float = 0.99
    lam: float = 0.95
    estimator: str = "gae"  # "gae" | "n_step"
    n: int = 5
    normalize: bool = True

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0,1], got {self.gamma}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must be in [0,1], got {self.lam}")
        if self.estimator not in ("gae", "n_step"):
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.n < 1:
            raise ValueError("n must be a positive integer")


def discounted_returns(rewards, gamma: float, bootstrap: float) -> np.ndarray:
    """Discounted reward-to-go, computed backward in one pass.

    ``bootstrap`` stands in for the value of everything beyond the horizon
    (zero when the episode ended).
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    if rewards.size == 0:
        raise ShapeError("rewards must be non-empty")
    out = np.empty_like(rewards)
    acc = float(bootstrap)
    for t in range(rewards.size - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def _check_lengths(traj: Trajectory, values) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (len(traj),):
        raise ShapeError(
            f"values length {values.shape} != transition count {len(traj)}"
        )
    return values


def _scalar_bootstrap(traj: Trajectory, bootstrap: float | None) -> float:
    if bootstrap is not None:
        return float(bootstrap)
    if traj.critic_count != 1:
        raise ShapeError(
            "multi-critic trajectory needs an explicit fused bootstrap value"
        )
    return float(traj.bootstrap_values[0])


def n_step_advantage(
    traj: Trajectory,
    values,
    cfg: AdvantageConfig,
    bootstrap: float | None = None,
) -> np.ndarray:
    """Fixed-horizon advantage: k-step discounted rewards plus a bootstrapped
    tail value, minus the current value; k shrinks near the end of the
    trajectory."""
    values = _check_lengths(traj, values)
    boot = _scalar_bootstrap(traj, bootstrap)
    rewards = traj.rewards()
    T = len(traj)
    terminal = traj.transitions[-1].done if T else False
    adv = np.empty(T)
    for t in range(T):
        k = min(cfg.n, T - t)
        acc = 0.0
        for i in range(k):
            acc += cfg.gamma**i * rewards[t + i]
        tail_index = t + k
        if tail_index < T:
            tail = values[tail_index]
        else:
            tail = 0.0 if terminal else boot
        adv[t] = acc + cfg.gamma**k * tail - values[t]
    return adv


def gae_advantage(
    traj: Trajectory,
    values,
    cfg: AdvantageConfig,
    bootstrap: float | None = None,
) -> np.ndarray:
    """Exponentially weighted advantage over one-step TD errors."""
    values = _check_lengths(traj, values)
    boot = _scalar_bootstrap(traj, bootstrap)
    rewards = traj.rewards()
    dones = traj.dones()
    T = len(traj)
    adv = np.empty(T)
    acc = 0.0
    for t in range(T - 1, -1, -1):
        not_done = 0.0 if dones[t] else 1.0
        next_value = boot if t == T - 1 else values[t + 1]
        delta = rewards[t] + cfg.gamma * next_value * not_done - values[t]
        acc = delta + cfg.gamma * cfg.lam * not_done * acc
        adv[t] = acc
    return adv


def compute_advantages(
    traj: Trajectory,
    values,
    cfg: AdvantageConfig,
    bootstrap: float | None = None,
) -> np.ndarray:
    if cfg.estimator == "gae":
        return gae_advantage(traj, values, cfg, bootstrap)
    return n_step_advantage(traj, values, cfg, bootstrap)


def normalize_advantages(adv) -> np.ndarray:
    """Shift/scale to zero mean and unit population std; constant input is
    only mean-shifted."""
    adv = np.asarray(adv, dtype=np.float64)
    if adv.size == 0:
        raise ShapeError("advantages must be non-empty")
    centered = adv - adv.mean()
    std = np.sqrt(np.mean(centered * centered))
    if std < 1e-8:
        return centered
    return centered / std


class TrajectoryBuilder:
    """Accumulates one agent's transitions between episode/rollout boundaries."""

    def __init__(self, start_step: int):
        self.start_step = start_step
        self.transitions: list[Transition] = []

    def add(self, transition: Transition) -> None:
        self.transitions.append(transition)

    def finish(self, bootstrap_values) -> tuple[Trajectory, int]:
        traj = Trajectory(self.transitions, np.asarray(bootstrap_values, dtype=np.float64))
        return traj, self.start_step


@dataclass
class RolloutBuffer:
    """Finished trajectories for one agent, tagged with their global start step."""

    items: list[tuple[Trajectory, int]] = field(default_factory=list)

    def add(self, traj: Trajectory, start_step: int) -> None:
        self.items.append((traj, start_step))

    def transition_count(self) -> int:
        return sum(len(t) for t, _ in self.items)

    def clear(self) -> None:
        self.items.clear()
