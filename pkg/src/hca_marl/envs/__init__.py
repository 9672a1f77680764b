"""Competitive environments behind one multi-agent interface."""

from __future__ import annotations

from dataclasses import fields

from ..errors import ConfigError
from .base import (
    AgentSpec,
    ContinuousSpec,
    DiscreteSpec,
    MultiAgentEnv,
    obs_hash,
    read_episode_log,
    step_record,
    write_episode_log,
)
from .soccer import SoccerEnv, SoccerParams
from .tennis import TennisEnv, TennisParams

SCENARIOS = ("tennis_1v1", "tennis_2v2", "soccer_2v2")


def make_env(scenario: str, env_overrides: dict | None = None) -> MultiAgentEnv:
    """Build a scenario environment, applying parameter overrides by name."""
    overrides = dict(env_overrides or {})
    if scenario in ("tennis_1v1", "tennis_2v2"):
        params = _build_params(TennisParams, overrides, scenario)
        return TennisEnv(1 if scenario == "tennis_1v1" else 2, params)
    if scenario == "soccer_2v2":
        params = _build_params(SoccerParams, overrides, scenario)
        return SoccerEnv(params)
    raise ConfigError(f"unknown scenario {scenario!r}; known: {SCENARIOS}")


def _build_params(cls, overrides: dict, scenario: str):
    known = {f.name for f in fields(cls)}
    for key in overrides:
        if key not in known:
            raise ConfigError(
                f"env.{key}: unknown parameter for {scenario} (known: {sorted(known)})"
            )
    return cls(**overrides)
