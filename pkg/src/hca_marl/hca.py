"""Hierarchical critic assignment.

Workers own the policies; managers contribute extra value heads over broader
observations. Per state, the value fed to the advantage estimator is the
maximum over the critics active at that step, the local critic always being
one of them. Every critic regresses to the same empirical-return targets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError
from .rollout import AdvantageConfig, Trajectory, compute_advantages

# Named manager-observation recipes for the tennis scenarios. Each entry is a
# list of quantity names the environment must expose.
NAMED_RECIPES: dict[str, list[str]] = {
    "M1": ["all_worker_obs", "ball_racket_distances"],
    "M2": ["all_worker_obs", "ball_racket_distances", "prev_ball_position"],
    "M3": [
        "all_worker_obs",
        "ball_racket_distances",
        "prev_ball_position",
        "prev_ball_velocity",
    ],
    "M4": [
        "all_worker_obs",
        "ball_racket_distances",
        "prev_ball_position",
        "prev_ball_velocity",
        "prev_racket_positions",
    ],
}


@dataclass
class HierarchySpec:
    """Two-level manager/worker topology with per-manager observation recipes."""

    workers: list[str]
    managers: list[str]
    assignment: dict[str, list[str]]
    manager_obs_recipe: dict[str, list[str]]

    def __post_init__(self):
        known_managers = set(self.managers)
        if len(known_managers) != len(self.managers):
            raise ConfigError("duplicate manager ids")
        for worker in self.assignment:
            if worker not in self.workers:
                raise ConfigError(f"assignment references unknown worker {worker!r}")
        for worker in self.workers:
            for mgr in self.assignment.get(worker, []):
                if mgr not in known_managers:
                    raise ConfigError(
                        f"worker {worker!r} assigned to unknown manager {mgr!r}"
                    )
        for mgr in self.managers:
            if mgr not in self.manager_obs_recipe:
                raise ConfigError(f"manager {mgr!r} has no observation recipe")
            if mgr in self.workers:
                raise ConfigError(f"{mgr!r} cannot be both worker and manager")

    def managers_of(self, worker: str) -> list[str]:
        return list(self.assignment.get(worker, []))

    def workers_of(self, manager: str) -> list[str]:
        return [w for w in self.workers if manager in self.assignment.get(w, [])]


@dataclass
class CriticSet:
    """The ordered value heads of one worker: local critic first, then one
    entry per assigned manager."""

    local_critic: object
    manager_critics: list[object] = field(default_factory=list)

    @property
    def count(self) -> int:
        return 1 + len(self.manager_critics)


@dataclass
class CriticSchedule:
    """Periodic rule for how many critics are active at a global step."""

    enabled: bool = False
    period_T: int = 100
    active_window_n: int = 10

    def __post_init__(self):
        if self.period_T < 1 or self.active_window_n < 1:
            raise ValueError("period_T and active_window_n must be positive")
        if self.active_window_n > self.period_T:
            raise ValueError("active_window_n must not exceed period_T")


def fuse_values(values) -> float:
    """Fused state value: the maximum over all critics' estimates."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("cannot fuse an empty value set")
    if not np.all(np.isfinite(values)):
        raise ValueError("cannot fuse non-finite value estimates")
    return float(values.max())


def active_critic_count(t: int, m: int, schedule: CriticSchedule) -> int:
    """Number of critics in play at global step ``t``.

    Disabled schedule keeps all ``m`` active. Enabled: all ``m`` inside the
    first ``active_window_n`` steps of each period, otherwise just the local
    critic plus the first manager.
    """
    if not schedule.enabled:
        return m
    if m < 2:
        raise ValueError("schedule requires at least two critics")
    if (t % schedule.period_T) < schedule.active_window_n:
        return m
    return 2


def fused_advantages(
    traj: Trajectory,
    cfg: AdvantageConfig,
    schedule: CriticSchedule,
    t0: int,
) -> np.ndarray:
    """Advantages computed from the per-step max over active critics.

    ``t0`` is the global environment step of the trajectory's first
    transition; the schedule is evaluated against global steps. The fused
    bootstrap uses the step after the last transition.
    """
    m = traj.critic_count
    values_matrix = traj.value_matrix()
    if values_matrix.shape[1] != m:
        raise ShapeError("per-transition critic count differs from bootstrap count")
    T = len(traj)
    fused = np.empty(T)
    for j in range(T):
        h = active_critic_count(t0 + j, m, schedule)
        fused[j] = fuse_values(values_matrix[j, :h])
    h_boot = active_critic_count(t0 + T, m, schedule)
    boot = fuse_values(traj.bootstrap_values[:h_boot])
    return compute_advantages(traj, fused, cfg, bootstrap=boot)


def fused_value_series(traj: Trajectory, schedule: CriticSchedule, t0: int):
    """(fused values (T,), fused bootstrap) without running an estimator."""
    m = traj.critic_count
    values_matrix = traj.value_matrix()
    T = len(traj)
    fused = np.empty(T)
    for j in range(T):
        h = active_critic_count(t0 + j, m, schedule)
        fused[j] = fuse_values(values_matrix[j, :h])
    boot = fuse_values(traj.bootstrap_values[: active_critic_count(t0 + T, m, schedule)])
    return fused, boot


def resolve_recipe(recipe) -> list[str]:
    """Expand a named recipe ("M1".."M4") or validate an explicit list."""
    if isinstance(recipe, str):
        if recipe not in NAMED_RECIPES:
            raise ConfigError(
                f"unknown named recipe {recipe!r}; known: {sorted(NAMED_RECIPES)}"
            )
        return list(NAMED_RECIPES[recipe])
    if not isinstance(recipe, (list, tuple)) or not recipe:
        raise ConfigError("recipe must be a non-empty list of quantity names")
    return [str(x) for x in recipe]


def manager_observation(quantities: dict[str, np.ndarray], recipe: list[str]) -> np.ndarray:
    """Assemble a manager observation by concatenating named quantities.

    ``quantities`` is the environment-provided mapping for one manager at the
    current step; unknown names are a configuration error.
    """
    parts = []
    for name in recipe:
        if name not in quantities:
            raise ConfigError(
                f"recipe references unknown quantity {name!r}; "
                f"environment exposes {sorted(quantities)}"
            )
        parts.append(np.asarray(quantities[name], dtype=np.float64).ravel())
    return np.concatenate(parts) if parts else np.empty(0)
