"""Multi-agent environment interface and episode-log helpers."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError


@dataclass(frozen=True)
class ContinuousSpec:
    dim: int


@dataclass(frozen=True)
class DiscreteSpec:
    n: int


@dataclass(frozen=True)
class AgentSpec:
    agent_id: str
    team: int
    role: str
    obs_dim: int
    action_space: ContinuousSpec | DiscreteSpec


class MultiAgentEnv:
    """Synchronous multi-agent environment.

    Subclasses fill ``roster`` and implement ``reset``/``step``/
    ``worker_observation``/``manager_quantities``. Rewards are emitted for
    every agent on every step, and observation dims always match the roster.
    """

    roster: list[AgentSpec]

    def __init__(self):
        self._rng = np.random.default_rng()
        self._step_count = 0

    @property
    def step_count(self) -> int:
        return self._step_count

    def agent_ids(self) -> list[str]:
        return [a.agent_id for a in self.roster]

    def spec_of(self, agent_id: str) -> AgentSpec:
        for a in self.roster:
            if a.agent_id == agent_id:
                return a
        raise KeyError(f"unknown agent {agent_id!r}")

    def reset(self, seed: int | None = None) -> dict[str, np.ndarray]:
        raise NotImplementedError

    def step(self, actions: dict):
        raise NotImplementedError

    def worker_observation(self, agent_id: str) -> np.ndarray:
        raise NotImplementedError

    def manager_quantities(self, assigned: list[str], team: int | None) -> dict[str, np.ndarray]:
        raise NotImplementedError

    def observations(self) -> dict[str, np.ndarray]:
        return {a: self.worker_observation(a) for a in self.agent_ids()}

    def _check_actions(self, actions: dict) -> None:
        for spec in self.roster:
            if spec.agent_id not in actions:
                raise ShapeError(f"missing action for agent {spec.agent_id!r}")
            a = actions[spec.agent_id]
            if isinstance(spec.action_space, ContinuousSpec):
                arr = np.asarray(a, dtype=np.float64)
                if arr.shape != (spec.action_space.dim,):
                    raise ShapeError(
                        f"agent {spec.agent_id!r}: action shape {arr.shape} != "
                        f"({spec.action_space.dim},)"
                    )
            else:
                ai = int(a)
                if not 0 <= ai < spec.action_space.n:
                    raise ShapeError(
                        f"agent {spec.agent_id!r}: action {ai} out of range "
                        f"[0, {spec.action_space.n})"
                    )


def obs_hash(vec: np.ndarray) -> str:
    """Stable 16-hex-digit digest of an observation vector."""
    data = np.ascontiguousarray(vec, dtype="<f8").tobytes()
    return hashlib.sha256(data).hexdigest()[:16]


def step_record(step: int, obs: dict, actions: dict, rewards: dict, dones: dict) -> dict:
    """One replay-log record; actions/rewards are JSON-serializable."""

    def _action(a):
        arr = np.asarray(a)
        return arr.tolist() if arr.ndim else int(arr)

    return {
        "step": step,
        "obs": {k: obs_hash(v) for k, v in sorted(obs.items())},
        "actions": {k: _action(v) for k, v in sorted(actions.items())},
        "rewards": {k: float(v) for k, v in sorted(rewards.items())},
        "dones": {k: bool(v) for k, v in sorted(dones.items())},
    }


def write_episode_log(fh, records: list[dict]) -> None:
    """Line-delimited JSON, one record per step."""
    for rec in records:
        fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_episode_log(fh) -> list[dict]:
    return [json.loads(line) for line in fh if line.strip()]
